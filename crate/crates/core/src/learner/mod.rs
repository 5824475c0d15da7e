//! Product-conditioned policy learning.
//!
//! A single shared network (two-layer tanh trunk, categorical payment and
//! relief heads, scalar value head) is trained with clipped-surrogate policy
//! gradients over generalized-advantage estimates collected from simulated
//! episodes. Heterogeneous behaviour comes entirely from conditioning: the
//! observation carries each borrower's preference weight, financial state,
//! and the offered product's parameters.

mod checkpoint;
mod gae;
mod mlp;
mod policy;
mod ppo;
mod trainer;

pub use checkpoint::Checkpoint;
pub use gae::gae;
pub use mlp::{Mlp, MlpCache, MlpSpec};
pub use policy::{sample_index, ActionMask, ForwardOut, PolicyBundle, HEAD_PAYMENT, HEAD_RELIEF};
pub use ppo::{ppo_loss, ppo_loss_and_grad, ppo_update, Adam, PpoStats, Sample};
pub use trainer::{
    train, DecisionRecord, EpisodeStats, IterationRow, PolicyDecider, ProductSource, RolloutBatch,
    RolloutEnv, SimEnv, TrainConfig, Trainer, Trajectory, Transition,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("all actions masked for head {head}")]
    AllActionsMasked { head: usize },
    #[error("sequence length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite {what} during update {context}")]
    NonFinite { what: &'static str, context: String },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}
