//! Minimal dense-tensor neural core with reverse-mode differentiation.
//!
//! Values flow through a [`Tape`] that records every operation's
//! hand-derived adjoint; [`Tape::backward`] replays them in reverse. Models
//! keep their trainable parameters in a [`ParamStore`], which also owns the
//! Adam/AdamW optimizer state and serializes to a bit-exact binary
//! container.
//!
//! Everything is generic over the element type: training runs in `f32`,
//! gradient checking in `f64`.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod scalar;
mod tape;
mod tensor;

pub use checkpoint::{load_tensors, save_tensors, CheckpointError, CHECKPOINT_MAGIC};
pub use gradcheck::{
    check_all_layers, check_blocks, grad_check, grad_check_on, GradCheckOutcome,
    DEFAULT_EPSILON, DEFAULT_TOLERANCE,
};
pub use layers::{
    sinusoidal_positions, Activation, CrossSource, CrossWiring, DecoderBlock, EncoderBlock,
    FeedForward, LayerNorm, Linear, MultiHeadAttention,
};
pub use optim::{AdamConfig, ParamStore};
pub use scalar::Scalar;
pub use tape::{AttnSegment, Tape, Var};
pub use tensor::{kaiming_uniform, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("kaiming init requires fan_in > 0")]
    ZeroFanIn,
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: String, details: String },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}
