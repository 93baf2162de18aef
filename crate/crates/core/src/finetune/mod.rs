//! Attaching a pre-trained backbone to a learner, fine-tuning it with
//! warm-up and layer freezing, and measuring forecast error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{
    build_superagent, partition, ActorCritic, AlgoError, CmappoConfig, GrpoConfig, GrpoTrainer, PpoConfig, PpoTrainer,
    Subagent, SubagentSource, Trunk,
};
use crate::backbone::Backbone;
use crate::data::{Split, WindowedDataset};
use crate::envs::{Environment, Observation, SlicedEnv};
use crate::nn::ValueNet;
use crate::numerics::{Parameterized, Scalar, Tensor};
use crate::rng::{derive_seed, seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    /// Backbone latent feeds a separate actor head.
    Latent,
    /// The backbone's projection head is the policy mean.
    Actor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Cmappo,
    Grpo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ppo, Algorithm::Cmappo, Algorithm::Grpo];
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Latent => "latent",
            Paradigm::Actor => "actor",
        })
    }
}

impl FromStr for Paradigm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latent" => Ok(Paradigm::Latent),
            "actor" => Ok(Paradigm::Actor),
            other => Err(format!("unknown paradigm {other:?} (expected actor or latent)")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Cmappo => "cmappo",
            Algorithm::Grpo => "grpo",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "cmappo" => Ok(Algorithm::Cmappo),
            "grpo" => Ok(Algorithm::Grpo),
            other => Err(format!("unknown algorithm {other:?} (expected ppo, cmappo or grpo)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("dimension mismatch: {what} is {actual}, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("{0}")]
    Rejected(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot evaluate an empty {0} split")]
    EmptySplit(Split),
    #[error(transparent)]
    Algo(#[from] AlgoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub algorithm: Algorithm,
    pub paradigm: Paradigm,
    pub frozen_fraction: f64,
    /// Steps with the whole encoder frozen; `None` means 10% of the total.
    pub warmup_steps: Option<usize>,
    pub total_timesteps: usize,
    pub seed: u64,
    /// Overrides the algorithm's learning rate for every backbone-bearing
    /// policy.
    pub learning_rate: f64,
    /// Timesteps between validation snapshots; 0 disables them.
    pub eval_every: usize,
    /// Restore the best validation snapshot at the end.
    pub keep_best: bool,
    pub latent_hidden: usize,
    pub zero_latent_head: bool,
    pub critic_hidden: usize,
    pub ppo: PpoConfig,
    pub grpo: GrpoConfig,
    pub cmappo: CmappoConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Grpo,
            paradigm: Paradigm::Actor,
            frozen_fraction: 0.0,
            warmup_steps: None,
            total_timesteps: 500_000,
            seed: 0,
            learning_rate: 1e-4,
            eval_every: 0,
            keep_best: true,
            latent_hidden: 64,
            zero_latent_head: false,
            critic_hidden: ValueNet::<f64>::DEFAULT_HIDDEN,
            ppo: PpoConfig::default(),
            grpo: GrpoConfig::default(),
            cmappo: CmappoConfig::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.total_timesteps / 10)
    }

    pub fn validate(&self) -> Result<(), FinetuneError> {
        let bad = |m: String| Err(FinetuneError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.frozen_fraction) {
            return bad(format!("frozen_fraction {} outside [0, 1]", self.frozen_fraction));
        }
        if self.warmup() > self.total_timesteps {
            return bad(format!(
                "warmup_steps {} exceeds total_timesteps {}",
                self.warmup(),
                self.total_timesteps
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0".into());
        }
        match self.algorithm {
            Algorithm::Ppo => self.ppo.validate()?,
            Algorithm::Grpo => self.grpo.validate()?,
            Algorithm::Cmappo => self.cmappo.validate()?,
        }
        Ok(())
    }
}

/// A backbone composed with a learner.
#[derive(Debug, Clone)]
pub struct Agent<S> {
    pub algorithm: Algorithm,
    pub paradigm: Paradigm,
    pub policy: ActorCritic<S>,
    obs_shape: (usize, usize),
}

/// Composes `backbone` with the configured learner for an environment with
/// `action_dim` actions.
///
/// CMAPPO subagents are created untrained over a column partition of the
/// observation; [`finetune`] trains them before the superagent.
pub fn attach<S: Scalar>(
    backbone: Backbone<S>,
    cfg: &FinetuneConfig,
    action_dim: usize,
) -> Result<Agent<S>, FinetuneError> {
    cfg.validate()?;
    let bc = *backbone.config();
    let obs_shape = (bc.context_length, bc.num_features);
    let mut rng = seeded(derive_seed(cfg.seed, stream::INIT));
    let critic = match cfg.algorithm {
        Algorithm::Grpo => None,
        _ => Some(cfg.critic_hidden),
    };
    let policy = match (cfg.algorithm, cfg.paradigm) {
        (Algorithm::Cmappo, Paradigm::Actor) => {
            return Err(FinetuneError::Rejected(
                "CMAPPO cannot use the actor paradigm: the superagent acts on the aggregated vector, \
                 which does not match the backbone input, so it always uses the latent paradigm"
                    .into(),
            ))
        }
        (Algorithm::Cmappo, Paradigm::Latent) => {
            let parts = partition(bc.num_features, cfg.cmappo.num_subagents);
            let subs = parts
                .into_iter()
                .map(|cols| {
                    let mut policy = ActorCritic::flat(
                        bc.context_length * cols.len(),
                        action_dim,
                        &[cfg.cmappo.hidden],
                        Some(cfg.cmappo.hidden),
                        &mut rng,
                    );
                    for p in policy.params_mut() {
                        p.frozen = true;
                    }
                    Subagent { columns: cols, policy }
                })
                .collect();
            build_superagent(
                Trunk::Backbone(backbone),
                SubagentSource::Policies(subs),
                action_dim,
                &cfg.cmappo,
                cfg.seed,
            )
        }
        (_, Paradigm::Actor) => {
            if bc.horizon != action_dim {
                return Err(FinetuneError::DimensionMismatch {
                    what: "backbone horizon".into(),
                    expected: action_dim,
                    actual: bc.horizon,
                });
            }
            ActorCritic::actor_paradigm(backbone, critic, &mut rng)
        }
        (_, Paradigm::Latent) => ActorCritic::latent_paradigm(
            backbone,
            action_dim,
            &[cfg.latent_hidden],
            cfg.zero_latent_head,
            critic,
            &mut rng,
        ),
    };
    Ok(Agent {
        algorithm: cfg.algorithm,
        paradigm: cfg.paradigm,
        policy,
        obs_shape,
    })
}

impl<S: Scalar> Agent<S> {
    pub fn backbone(&self) -> &Backbone<S> {
        self.policy.backbone().expect("agents always hold a backbone")
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone<S> {
        self.policy.backbone_mut().expect("agents always hold a backbone")
    }

    pub fn into_backbone(self) -> Backbone<S> {
        match self.policy.trunk {
            Trunk::Backbone(b) => b,
            Trunk::Aggregated(a) => match a.base {
                Trunk::Backbone(b) => b,
                _ => unreachable!("agents always hold a backbone"),
            },
            Trunk::Flat { .. } => unreachable!("agents always hold a backbone"),
        }
    }

    fn subagents_mut(&mut self) -> Option<&mut Vec<Subagent<S>>> {
        match &mut self.policy.trunk {
            Trunk::Aggregated(a) => match &mut a.source {
                SubagentSource::Policies(v) => Some(v),
                SubagentSource::Oracle { .. } => None,
            },
            _ => None,
        }
    }
}

/// Anything producing evaluation-mode forecasts for windows.
pub trait Forecaster {
    fn horizon(&self) -> usize;
    fn forecast(&self, states: &[&[f64]]) -> Vec<Vec<f64>>;
}

impl<S: Scalar> Forecaster for Backbone<S> {
    fn horizon(&self) -> usize {
        self.config().horizon
    }

    fn forecast(&self, states: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut g = crate::numerics::Graph::new();
        let y = self.predict_batch(&mut g, states);
        g.value(y)
            .to_f64_vec()
            .chunks(self.config().horizon)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

impl<S: Scalar> Forecaster for Agent<S> {
    fn horizon(&self) -> usize {
        self.policy.action_dim()
    }

    fn forecast(&self, states: &[&[f64]]) -> Vec<Vec<f64>> {
        let (rows, cols) = self.obs_shape;
        let obs: Vec<Observation> = states.iter().map(|s| Observation::new(rows, cols, s.to_vec())).collect();
        let refs: Vec<&Observation> = obs.iter().collect();
        self.policy.mean_actions(&refs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub split: Option<Split>,
    pub count: usize,
}

const EVAL_CHUNK: usize = 256;

/// MSE and MAE over every window and horizon step of `ds`; `split` only
/// tags the report.
pub fn evaluate<F: Forecaster + ?Sized>(
    model: &F,
    ds: &WindowedDataset,
    split: Option<Split>,
) -> Result<EvalReport, FinetuneError> {
    if ds.is_empty() {
        return Err(FinetuneError::EmptySplit(split.unwrap_or(Split::Test)));
    }
    assert_eq!(
        model.horizon(),
        ds.horizon,
        "contract violation: model horizon {} vs dataset horizon {}",
        model.horizon(),
        ds.horizon
    );
    let (mut se, mut ae) = (0.0, 0.0);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let states: Vec<&[f64]> = chunk.iter().map(|&i| ds.state(i)).collect();
        for (&i, pred) in chunk.iter().zip(model.forecast(&states)) {
            for (p, y) in pred.iter().zip(ds.target(i)) {
                se += (p - y) * (p - y);
                ae += (p - y).abs();
            }
        }
    }
    let n = (ds.len() * ds.horizon) as f64;
    Ok(EvalReport {
        mse: se / n,
        mae: ae / n,
        split,
        count: ds.len(),
    })
}

/// Evaluates on the windows of `ds` tagged `split`.
pub fn evaluate_split<F: Forecaster + ?Sized>(
    model: &F,
    ds: &WindowedDataset,
    split: Split,
) -> Result<EvalReport, FinetuneError> {
    evaluate(model, &ds.part(split), Some(split))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestep: usize,
    pub mean_reward: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOutcome {
    pub rewards: Vec<CurvePoint>,
    /// Subagent reward curves, CMAPPO only.
    pub subagent_rewards: Vec<Vec<CurvePoint>>,
    pub snapshots: Vec<Snapshot>,
    /// Timestep of the parameters the agent holds on return.
    pub returned_timestep: usize,
    pub diverged: bool,
    pub message: Option<String>,
}

enum Trainer<S> {
    Ppo(PpoTrainer<S>),
    Grpo(GrpoTrainer<S>),
}

impl<S: Scalar> Trainer<S> {
    fn remaining(&self) -> usize {
        match self {
            Trainer::Ppo(t) => t.remaining(),
            Trainer::Grpo(t) => t.remaining(),
        }
    }

    fn step<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        policy: &mut ActorCritic<S>,
    ) -> Result<CurvePoint, AlgoError> {
        match self {
            Trainer::Ppo(t) => {
                let (r, _) = t.iterate(env, policy)?;
                Ok(CurvePoint {
                    timestep: r.timesteps,
                    mean_reward: r.mean_step_reward,
                })
            }
            Trainer::Grpo(t) => {
                let r = t.round(env, policy)?;
                Ok(CurvePoint {
                    timestep: r.timesteps,
                    mean_reward: r.mean_step_reward,
                })
            }
        }
    }
}

struct Best<S> {
    mse: f64,
    timestep: usize,
    values: Vec<Tensor<S>>,
}

/// Fine-tunes `agent` on `env` (built from the training windows).
///
/// The encoder is fully frozen for the warm-up steps, then
/// `frozen_fraction` applies. With a validation set, snapshots are taken
/// at step 0, every `eval_every` steps and at the end; the best one is
/// restored when `keep_best` is set. A non-finite loss stops training,
/// restores the best snapshot (or the last finite parameters) and flags
/// the outcome.
pub fn finetune<S: Scalar, E: Environment + Clone>(
    agent: &mut Agent<S>,
    env: &mut E,
    validation: Option<&WindowedDataset>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, FinetuneError> {
    cfg.validate()?;
    if cfg.algorithm != agent.algorithm {
        return Err(FinetuneError::InvalidConfig(format!(
            "agent was attached for {} but the configuration asks for {}",
            agent.algorithm, cfg.algorithm
        )));
    }
    if env.action_dim() != agent.policy.action_dim() {
        return Err(FinetuneError::DimensionMismatch {
            what: "environment action dimension".into(),
            expected: agent.policy.action_dim(),
            actual: env.action_dim(),
        });
    }
    let mut out = FinetuneOutcome::default();
    if cfg.total_timesteps == 0 {
        return Ok(out);
    }

    let mut budget = cfg.total_timesteps;
    if agent.algorithm == Algorithm::Cmappo {
        let cm = CmappoConfig {
            total_timesteps: cfg.total_timesteps,
            ..cfg.cmappo
        };
        let (per_sub, super_budget) = cm.budgets();
        budget = super_budget;
        let subs = agent.subagents_mut().expect("CMAPPO agents hold subagents");
        for (i, sub) in subs.iter_mut().enumerate() {
            let mut curve = Vec::new();
            if per_sub > 0 {
                for p in sub.policy.params_mut() {
                    p.frozen = false;
                }
                let mut sliced = SlicedEnv::new(env.clone(), sub.columns.clone());
                let pc = PpoConfig {
                    total_timesteps: per_sub,
                    ..cm.subagent
                };
                let mut t = PpoTrainer::new(pc, derive_seed(cfg.seed, 1000 + i as u64))?
                    .with_provenance(&format!("subagent-{i}"));
                let result = t.train(&mut sliced, &mut sub.policy);
                for p in sub.policy.params_mut() {
                    p.frozen = true;
                }
                match result {
                    Ok(h) => {
                        curve = h
                            .iter()
                            .map(|r| CurvePoint {
                                timestep: r.timesteps,
                                mean_reward: r.mean_step_reward,
                            })
                            .collect()
                    }
                    Err(e) => {
                        out.diverged = true;
                        out.message = Some(format!("subagent {i}: {e}"));
                        return Ok(out);
                    }
                }
            }
            out.subagent_rewards.push(curve);
        }
    }

    let mut trainer = match agent.algorithm {
        Algorithm::Grpo => {
            let mut gc = cfg.grpo;
            gc.total_timesteps = budget;
            gc.learning_rate = cfg.learning_rate;
            Trainer::Grpo(GrpoTrainer::new(gc, cfg.seed)?)
        }
        Algorithm::Ppo | Algorithm::Cmappo => {
            let mut pc = if agent.algorithm == Algorithm::Ppo {
                cfg.ppo
            } else {
                cfg.cmappo.superagent
            };
            pc.total_timesteps = budget;
            pc.learning_rate = cfg.learning_rate;
            let tag = if agent.algorithm == Algorithm::Ppo { "policy" } else { "superagent" };
            Trainer::Ppo(PpoTrainer::new(pc, cfg.seed)?.with_provenance(tag))
        }
    };

    let warmup = cfg.warmup().min(budget);
    let mut warm = warmup > 0;
    agent
        .backbone_mut()
        .set_frozen_fraction(if warm { 1.0 } else { cfg.frozen_fraction });

    let mut best: Option<Best<S>> = None;
    let mut snap = |agent: &Agent<S>, timestep: usize, reward: f64, out: &mut FinetuneOutcome| -> Result<(), FinetuneError> {
        if let Some(val) = validation {
            let r = evaluate(agent, val, Some(Split::Validation))?;
            out.snapshots.push(Snapshot {
                timestep,
                mean_reward: reward,
                val_mse: r.mse,
                val_mae: r.mae,
            });
            if best.as_ref().is_none_or(|b| r.mse < b.mse) {
                best = Some(Best {
                    mse: r.mse,
                    timestep,
                    values: agent.policy.snapshot(),
                });
            }
        }
        Ok(())
    };
    snap(agent, 0, f64::NAN, &mut out)?;
    let mut next_eval = if cfg.eval_every > 0 { cfg.eval_every } else { usize::MAX };
    let mut last = CurvePoint {
        timestep: 0,
        mean_reward: f64::NAN,
    };
    while trainer.remaining() > 0 {
        match trainer.step(env, &mut agent.policy) {
            Ok(p) => {
                out.rewards.push(p);
                last = p;
            }
            Err(e) => {
                out.diverged = true;
                out.message = Some(e.to_string());
                break;
            }
        }
        if warm && last.timestep >= warmup {
            agent.backbone_mut().set_frozen_fraction(cfg.frozen_fraction);
            warm = false;
        }
        if last.timestep >= next_eval && trainer.remaining() > 0 {
            snap(agent, last.timestep, last.mean_reward, &mut out)?;
            while next_eval <= last.timestep {
                next_eval += cfg.eval_every;
            }
        }
    }
    if !out.diverged {
        snap(agent, last.timestep, last.mean_reward, &mut out)?;
    }
    out.returned_timestep = last.timestep;
    if let Some(b) = best {
        let last_mse = out.snapshots.last().map(|s| s.val_mse);
        if (cfg.keep_best || out.diverged) && last_mse.is_none_or(|m| b.mse < m || out.diverged) {
            agent.policy.restore(&b.values);
            out.returned_timestep = b.timestep;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;

    fn backbone() -> Backbone<f64> {
        Backbone::new(
            BackboneConfig {
                context_length: 4,
                num_features: 3,
                horizon: 2,
                model_dim: 8,
                num_heads: 2,
                num_layers: 2,
                ff_dim: 8,
                dropout: 0.0,
            },
            1,
        )
    }

    #[test]
    fn cmappo_actor_rejected() {
        let cfg = FinetuneConfig {
            algorithm: Algorithm::Cmappo,
            paradigm: Paradigm::Actor,
            ..FinetuneConfig::default()
        };
        let err = attach(backbone(), &cfg, 2).unwrap_err();
        assert!(matches!(err, FinetuneError::Rejected(_)));
        assert!(err.to_string().contains("latent"));
    }

    #[test]
    fn actor_horizon_mismatch_names_both() {
        let cfg = FinetuneConfig::default();
        let msg = attach(backbone(), &cfg, 3).unwrap_err().to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn warmup_cannot_exceed_total() {
        let cfg = FinetuneConfig {
            warmup_steps: Some(11),
            total_timesteps: 10,
            ..FinetuneConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("grpo".parse::<Algorithm>().unwrap(), Algorithm::Grpo);
        assert_eq!("latent".parse::<Paradigm>().unwrap(), Paradigm::Latent);
        assert!("a2c".parse::<Algorithm>().is_err());
    }
}
