//! The gated residual block: `x + c·R(x)` on a fixed-dimension embedding,
//! where `c` comes from the yaw gate and `R` is a small fully-connected
//! branch trained to pull profile embeddings onto their frontal counterparts.

mod forward;
mod grad;
mod params;
mod train;

use thiserror::Error;

pub(crate) use forward::affine;
pub use forward::{apply_batch, dream_forward, residual, DropoutMask};
pub use grad::{loss_and_gradients, pair_loss, PairSet, TrainingPair};
pub use params::{Arch, DreamParams, DEFAULT_PRELU_SLOPE};
pub use train::{pair_coefficients, train_stitch, train_stitch_from, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gate coefficient {0} outside [0, 1]")]
    InvalidCoefficient(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training pair: {0}")]
    InvalidPair(String),
    #[error("non-finite block parameters")]
    NonFiniteParams,
    #[error("loss is not finite")]
    NonFiniteLoss,
}
