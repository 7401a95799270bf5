//! Minimal deterministic neural-network engine: layers with manual
//! gradients, weighted losses, Adam, and finite-difference checking.

pub mod activation;
pub mod adam;
pub mod conv1d;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod shape_ops;

pub use activation::{activation_apply, Activation};
pub use adam::{AdamConfig, AdamState};
pub use conv1d::{Conv1DLayer, Padding};
pub use dense::DenseLayer;
pub use dropout::{DropoutLayer, Mode};
pub use gradcheck::{gradient_check, GradReport, GradTarget, DEFAULT_EPSILON};
pub use loss::{
    cross_entropy, mse, mse_grad, weighted_cross_entropy, weighted_cross_entropy_grad,
    ClassWeights, PROB_CLIP,
};
pub use lstm::{Direction, LstmLayer};
pub use network::{LayerKind, Network};
pub use shape_ops::{Reshape, SequenceEnds};
