//! Policy-gradient learners: PPO with GAE, centralized multi-agent PPO with
//! attention aggregation, and group relative policy optimization.

mod aggregator;
mod cmappo;
mod gae;
mod grpo;
mod policy;
mod ppo;

use thiserror::Error;

pub use aggregator::{Aggregation, AttentionAggregator};
pub use cmappo::{build_superagent, cmappo_train, partition, CmappoConfig, CmappoOutcome};
pub use gae::compute_gae;
pub use grpo::{
    gaussian_kl, grpo_group_advantages, grpo_update, GroupBatch, GrpoConfig, GrpoRoundRecord, GrpoStats, GrpoTrainer,
};
pub use policy::{
    ActSample, ActorCritic, AggregatedTrunk, Head, PolicyOutput, Subagent, SubagentSource, Trunk, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use ppo::{
    collect_rollout, ppo_surrogate, ppo_surrogate_node, ppo_update, IterationRecord, PpoConfig, PpoTrainer,
    RolloutBuffer, RolloutCursor, UpdateStats,
};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
}
