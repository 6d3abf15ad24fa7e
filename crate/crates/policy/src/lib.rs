//! Sequence policy for job-shop dispatching.
//!
//! A self-attention encoder embeds the rows of an instance's sequence
//! encoding; a recurrent pointer decoder emits a probability
//! distribution over rows step by step, masked so that every decoded
//! sequence is a feasible dispatch list. All computation runs on an
//! internal reverse-mode gradient tape, generic over `f32`/`f64`.

pub mod checkpoint;
pub mod mat;
pub mod model;
pub mod rollout;
pub mod tape;

pub use mat::{Mat, Scalar};
pub use model::{ModelConfig, NormMode, PolicyModel, Precision, Staging};
pub use rollout::{DecodeMode, Decoder, Episode, FinishedDecode, Rollout, StepDistribution};
pub use tape::{BnObservation, Grads, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("instance shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] jsp_core::Error),
}
