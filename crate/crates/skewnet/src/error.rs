//! Error type shared across the crate, with a stable mapping to CLI exit
//! codes: configuration problems exit 2, data problems 3, numeric failures 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameters, inconsistent experiment
    /// variants, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or layer shape mismatch.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Input data violates a contract (labels out of range, non-finite
    /// features, class too small).
    #[error("data error: {0}")]
    Data(String),

    /// CSV header does not match the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A class index points outside the registry.
    #[error("index error: {0}")]
    Index(String),

    /// Backward pass invoked without a matching cached forward pass.
    #[error("state error: {0}")]
    State(String),

    /// Non-finite value where the math requires finite input.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An augmentation plan would let synthetic rows reach or exceed the
    /// original class count.
    #[error("cap violation: {0}")]
    Cap(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI. 0 is success and never produced here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Cap(_) => 2,
            Error::Dimension(_)
            | Error::Data(_)
            | Error::Schema(_)
            | Error::Index(_)
            | Error::Io(_) => 3,
            Error::Numeric(_) | Error::State(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Cap("x".into()).exit_code(), 2);
        assert_eq!(Error::Data("x".into()).exit_code(), 3);
        assert_eq!(Error::Schema("x".into()).exit_code(), 3);
        assert_eq!(Error::Dimension("x".into()).exit_code(), 3);
        assert_eq!(Error::Numeric("x".into()).exit_code(), 4);
    }
}
