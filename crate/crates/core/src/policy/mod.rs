//! Attention policy: node and depot embeddings, a transformer encoder with
//! switchable normalisation, feed-forward and attention variants, and a
//! masked single-step decoder used autoregressively.

pub mod autodiff;
mod checkpoint;
pub mod model;
mod rollout;
pub mod tensor;

use thiserror::Error;

use crate::env::EnvError;

pub use checkpoint::CHECKPOINT_VERSION;
pub use model::{
    AttentionKind, EncoderConfig, FfnKind, NormKind, NormPlacement, PolicyConfig, PolicyParams, StepInput,
};
pub use rollout::{decode_step, encode, rollout, rollout_traces, trace_log_probs, DecodeMode, Encoding, Step, Trace};
pub use tensor::Mat;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),
    #[error("every action is masked")]
    AllMasked,
    #[error("parameters are already expanded for multiple depots")]
    AlreadyExpanded,
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
