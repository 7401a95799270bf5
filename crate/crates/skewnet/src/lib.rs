//! skewnet: imbalance-aware traffic classification.

pub mod augment;
pub mod autoencoder;
pub mod checkpoint;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod vae;
pub mod weight_search;

pub use error::{Error, Result};
pub use tensor::Tensor;
