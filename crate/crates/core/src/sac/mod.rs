//! Soft actor-critic built on a small in-crate differentiation tape.

mod agent;
mod buffer;
mod checkpoint;
pub mod matrix;
mod nn;
mod policy;
pub mod tape;
mod train;

use thiserror::Error;

pub use agent::{
    actor_loss, alpha_loss, critic_loss, critic_targets, CriticPair, LossGrad, LossReport, SacAgent,
    SacConfig,
};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use matrix::Matrix;
pub use nn::{polyak_update, Adam, DenseNet, Linear};
pub use policy::{GaussianPolicy, ACTION_BOUND, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{evaluate_policy, train, PolicyScore, TrainLogRow, TrainOptions, TrainOutcome, TrainingLog};

use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum SacError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("replay buffer holds {have} transitions, a batch needs {need}")]
    BufferUnderfilled { have: usize, need: usize },
    #[error("non-finite {what} loss")]
    NonFiniteLoss { what: &'static str, batch: Box<Batch> },
    #[error("non-finite {what} loss at step {step}; batch dumped to {dump}")]
    Diverged { what: &'static str, step: usize, dump: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
