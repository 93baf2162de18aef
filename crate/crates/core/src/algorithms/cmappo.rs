use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{
    ActorCritic, AggregatedTrunk, AlgoError, AttentionAggregator, IterationRecord, PpoConfig, PpoTrainer, Subagent,
    SubagentSource, Trunk,
};
use crate::backbone::Backbone;
use crate::envs::{Environment, SlicedEnv};
use crate::numerics::{Parameterized, Scalar};
use crate::rng::{derive_seed, seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmappoConfig {
    pub num_subagents: usize,
    pub encoding_dim: usize,
    pub hidden: usize,
    /// Share of `total_timesteps` spent on phase 1, split evenly over the
    /// subagents.
    pub subagent_fraction: f64,
    pub total_timesteps: usize,
    pub subagent: PpoConfig,
    pub superagent: PpoConfig,
}

impl Default for CmappoConfig {
    fn default() -> Self {
        Self {
            num_subagents: 10,
            encoding_dim: 32,
            hidden: 64,
            subagent_fraction: 0.5,
            total_timesteps: 500_000,
            subagent: PpoConfig::default(),
            superagent: PpoConfig::default(),
        }
    }
}

impl CmappoConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.num_subagents == 0 {
            return Err(AlgoError::InvalidConfig("num_subagents must be >= 1".into()));
        }
        if self.encoding_dim == 0 || self.hidden == 0 {
            return Err(AlgoError::InvalidConfig("encoding_dim and hidden must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.subagent_fraction) {
            return Err(AlgoError::InvalidConfig("subagent_fraction must lie in [0, 1)".into()));
        }
        self.subagent.validate()?;
        self.superagent.validate()
    }

    /// `(per subagent, superagent)` timestep budgets.
    pub fn budgets(&self) -> (usize, usize) {
        let phase1 = (self.total_timesteps as f64 * self.subagent_fraction).floor() as usize;
        let per = phase1 / self.num_subagents;
        (per, self.total_timesteps - per * self.num_subagents)
    }
}

/// Contiguous column blocks of `⌈N/n⌉`, the last one smaller. When that
/// leaves some subagents without columns, sizes are balanced instead so
/// every block differs in width by at most one.
pub fn partition(num_columns: usize, num_subagents: usize) -> Vec<Range<usize>> {
    assert!(
        num_subagents >= 1 && num_subagents <= num_columns,
        "contract violation: {num_subagents} subagents cannot each get a slice of {num_columns} columns"
    );
    let width = num_columns.div_ceil(num_subagents);
    if width * (num_subagents - 1) < num_columns {
        return (0..num_subagents)
            .map(|i| i * width..((i + 1) * width).min(num_columns))
            .collect();
    }
    let (base, extra) = (num_columns / num_subagents, num_columns % num_subagents);
    let mut start = 0;
    (0..num_subagents)
        .map(|i| {
            let w = base + usize::from(i < extra);
            let r = start..start + w;
            start += w;
            r
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CmappoOutcome<S> {
    /// Owns the trained subagents inside its aggregated trunk.
    pub superagent: ActorCritic<S>,
    pub partition: Vec<Range<usize>>,
    pub subagent_histories: Vec<Vec<IterationRecord>>,
    pub superagent_history: Vec<IterationRecord>,
}

/// Builds the superagent around `base`, aggregating the given subagents.
pub fn build_superagent<S: Scalar>(
    base: Trunk<S>,
    source: SubagentSource<S>,
    action_dim: usize,
    cfg: &CmappoConfig,
    seed: u64,
) -> ActorCritic<S> {
    let mut rng = seeded(derive_seed(seed, stream::INIT));
    let aggregator = AttentionAggregator::new(base.feature_dim(), action_dim, cfg.encoding_dim, &mut rng);
    let trunk = AggregatedTrunk {
        base,
        aggregator,
        source,
    };
    ActorCritic::aggregated(trunk, action_dim, &[cfg.hidden], Some(cfg.hidden), &mut rng)
}

/// Phase 1: independent PPO per column slice. Phase 2: PPO on the
/// superagent whose trunk is `backbone` (latent) or the flat observation.
pub fn cmappo_train<S: Scalar, E: Environment + Clone>(
    env: &E,
    backbone: Option<Backbone<S>>,
    cfg: &CmappoConfig,
    seed: u64,
) -> Result<CmappoOutcome<S>, AlgoError> {
    cfg.validate()?;
    let (rows, cols) = env.observation_shape();
    let action_dim = env.action_dim();
    let parts = partition(cols, cfg.num_subagents);
    let (per_sub, super_budget) = cfg.budgets();

    let mut subagents = Vec::with_capacity(parts.len());
    let mut sub_histories = Vec::with_capacity(parts.len());
    for (i, cols) in parts.iter().enumerate() {
        let sub_seed = derive_seed(seed, 1000 + i as u64);
        let mut rng = seeded(derive_seed(sub_seed, stream::INIT));
        let mut policy =
            ActorCritic::flat(rows * cols.len(), action_dim, &[cfg.hidden], Some(cfg.hidden), &mut rng);
        let mut history = Vec::new();
        if per_sub > 0 {
            let mut sliced = SlicedEnv::new(env.clone(), cols.clone());
            let pc = PpoConfig {
                total_timesteps: per_sub,
                ..cfg.subagent
            };
            let mut trainer = PpoTrainer::new(pc, sub_seed)?.with_provenance(&format!("subagent-{i}"));
            history = trainer.train(&mut sliced, &mut policy)?;
        }
        for p in policy.params_mut() {
            p.frozen = true;
        }
        subagents.push(Subagent {
            columns: cols.clone(),
            policy,
        });
        sub_histories.push(history);
    }

    let base = match backbone {
        Some(b) => Trunk::Backbone(b),
        None => Trunk::Flat { input_dim: rows * cols },
    };
    let mut superagent = build_superagent(base, SubagentSource::Policies(subagents), action_dim, cfg, seed);
    let mut history = Vec::new();
    if super_budget > 0 {
        let mut env = env.clone();
        let pc = PpoConfig {
            total_timesteps: super_budget,
            ..cfg.superagent
        };
        let mut trainer = PpoTrainer::new(pc, derive_seed(seed, 999))?.with_provenance("superagent");
        history = trainer.train(&mut env, &mut superagent)?;
    }
    Ok(CmappoOutcome {
        superagent,
        partition: parts,
        subagent_histories: sub_histories,
        superagent_history: history,
    })
}
