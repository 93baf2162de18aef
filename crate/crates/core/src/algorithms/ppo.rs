use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{compute_gae, ActorCritic, AlgoError};
use crate::envs::{Environment, Observation};
use crate::nn::{clip_grad_norm, collect_grads, Adam, AdamConfig};
use crate::numerics::{Graph, NodeId, Parameterized, Scalar, Tensor};
use crate::rng::{derive_seed, seeded, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub num_steps: usize,
    pub total_timesteps: usize,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 10,
            minibatch_size: 64,
            learning_rate: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            num_steps: 2048,
            total_timesteps: 500_000,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |m: &str| Err(AlgoError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be > 0");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.num_steps == 0 {
            return bad("epochs, minibatch_size and num_steps must be >= 1");
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate must be >= 0 and max_grad_norm > 0");
        }
        Ok(())
    }
}

/// `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Graph form of [`ppo_surrogate`]; elementwise over matching shapes. The
/// derivative in `ratio` is exactly zero where the clipped branch is taken.
pub fn ppo_surrogate_node<S: Scalar>(g: &mut Graph<S>, ratio: NodeId, advantage: NodeId, eps: f64) -> NodeId {
    let unclipped = g.mul(ratio, advantage);
    let clipped = g.clamp(ratio, S::of(1.0 - eps), S::of(1.0 + eps));
    let clipped = g.mul(clipped, advantage);
    g.minimum(unclipped, clipped)
}

/// Fixed-capacity trajectory storage.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_value: f64,
    /// Returns of episodes that finished inside this rollout.
    pub episode_returns: Vec<f64>,
    /// Which policy produced the actions.
    pub provenance: String,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        compute_gae(&self.rewards, &self.values, &self.dones, self.bootstrap_value, gamma, lambda)
    }
}

/// Where collection resumes: the pending observation and episode
/// bookkeeping survive between rollouts.
#[derive(Debug, Clone)]
pub struct RolloutCursor {
    seed: u64,
    pending: Option<Observation>,
    episodes: u64,
    running_return: f64,
}

impl RolloutCursor {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            pending: None,
            episodes: 0,
            running_return: 0.0,
        }
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    fn observation<E: Environment + ?Sized>(&mut self, env: &mut E) -> Observation {
        match self.pending.take() {
            Some(o) if !env.is_done() => o,
            _ => {
                self.running_return = 0.0;
                env.reset(derive_seed(self.seed, self.episodes))
            }
        }
    }
}

/// Steps `env` `num_steps` times with `policy`, sampling when `rng` is
/// given and acting on the mean otherwise.
pub fn collect_rollout<S: Scalar, E: Environment + ?Sized>(
    env: &mut E,
    policy: &ActorCritic<S>,
    num_steps: usize,
    mut rng: Option<&mut Rng>,
    cursor: &mut RolloutCursor,
    provenance: &str,
) -> RolloutBuffer {
    let mut buf = RolloutBuffer {
        observations: Vec::with_capacity(num_steps),
        actions: Vec::with_capacity(num_steps),
        log_probs: Vec::with_capacity(num_steps),
        rewards: Vec::with_capacity(num_steps),
        values: Vec::with_capacity(num_steps),
        dones: Vec::with_capacity(num_steps),
        bootstrap_value: 0.0,
        episode_returns: Vec::new(),
        provenance: provenance.to_string(),
    };
    let mut obs = cursor.observation(env);
    for _ in 0..num_steps {
        let sample = policy.act(&obs, rng.as_deref_mut());
        let step = env.step(&sample.action);
        cursor.running_return += step.reward;
        buf.observations.push(obs);
        buf.actions.push(sample.action);
        buf.log_probs.push(sample.log_prob);
        buf.rewards.push(step.reward);
        buf.values.push(sample.value.unwrap_or(0.0));
        buf.dones.push(step.done);
        if step.done {
            buf.episode_returns.push(cursor.running_return);
            cursor.episodes += 1;
            cursor.running_return = 0.0;
            obs = env.reset(derive_seed(cursor.seed, cursor.episodes));
        } else {
            obs = step.observation;
        }
    }
    let last_done = buf.dones.last().copied().unwrap_or(true);
    if !last_done && policy.has_critic() {
        buf.bootstrap_value = policy.values(&[&obs])[0];
    }
    cursor.pending = Some(obs);
    buf
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
    /// Ratios of the very first minibatch, for inspection.
    #[serde(skip)]
    pub first_ratios: Vec<f64>,
}

fn normalize(adv: &[f64]) -> Vec<f64> {
    if adv.iter().all(|a| *a == adv[0]) {
        return vec![0.0; adv.len()];
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    adv.iter().map(|a| (a - mean) / sd).collect()
}

fn column<S: Scalar>(g: &mut Graph<S>, v: impl Iterator<Item = f64>) -> NodeId {
    let data: Vec<S> = v.map(S::of).collect();
    let n = data.len();
    g.constant(Tensor::new(vec![n, 1], data).expect("finite rollout values"))
}

/// Clipped-surrogate epochs over shuffled minibatches of `buf`.
///
/// On a non-finite loss the parameters are restored to their values at
/// entry and an error is returned.
pub fn ppo_update<S: Scalar>(
    policy: &mut ActorCritic<S>,
    adam: &mut Adam<S>,
    buf: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats, AlgoError> {
    assert!(!buf.is_empty(), "contract violation: update on an empty buffer");
    assert!(
        advantages.len() == buf.len() && returns.len() == buf.len(),
        "contract violation: advantages and returns must match the buffer"
    );
    let snapshot = policy.snapshot();
    let mut stats = UpdateStats::default();
    let (mut ratio_sum, mut clipped, mut seen) = (0.0, 0usize, 0usize);
    let mut idx: Vec<usize> = (0..buf.len()).collect();
    let a_dim = policy.action_dim();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for mb in idx.chunks(cfg.minibatch_size) {
            let obs: Vec<&Observation> = mb.iter().map(|&i| &buf.observations[i]).collect();
            let acts: Vec<&[f64]> = mb.iter().map(|&i| buf.actions[i].as_slice()).collect();
            let raw: Vec<f64> = mb.iter().map(|&i| advantages[i]).collect();
            let adv = if cfg.normalize_advantages { normalize(&raw) } else { raw };

            let mut g = Graph::new();
            let out = policy.forward(&mut g, &obs);
            let lp = ActorCritic::log_prob_node(&mut g, &out, &acts);
            let old = column(&mut g, mb.iter().map(|&i| buf.log_probs[i]));
            let diff = g.sub(lp, old);
            let ratio = g.exp(diff);
            let adv_node = column(&mut g, adv.iter().copied());
            let surr = ppo_surrogate_node(&mut g, ratio, adv_node, cfg.clip_eps);
            let surr_mean = g.mean(surr);
            let policy_loss = g.neg(surr_mean);
            let mut loss = policy_loss;
            let mut value_loss = None;
            if let Some(v) = out.value {
                let target = column(&mut g, mb.iter().map(|&i| returns[i]));
                let d = g.sub(v, target);
                let sq = g.square(d);
                let vl = g.mean(sq);
                let weighted = g.scale(vl, S::of(cfg.value_coef));
                loss = g.add(loss, weighted);
                value_loss = Some(vl);
            }
            let ls_sum = g.sum(out.log_std);
            let entropy = g.offset(ls_sum, S::of(a_dim as f64 * 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()));
            if cfg.entropy_coef != 0.0 {
                let e = g.scale(entropy, S::of(cfg.entropy_coef));
                loss = g.sub(loss, e);
            }
            let loss_value = g.value(loss).item().as_f64();
            if !loss_value.is_finite() || g.first_non_finite().is_some() {
                policy.restore(&snapshot);
                return Err(AlgoError::NonFiniteLoss(format!("PPO loss {loss_value}")));
            }
            let ratios = g.value(ratio).to_f64_vec();
            if stats.minibatches == 0 {
                stats.first_ratios = ratios.clone();
            }
            for (r, (&l, &o)) in ratios.iter().zip(g.value(lp).to_f64_vec().iter().zip(g.value(old).to_f64_vec().iter())) {
                ratio_sum += r;
                if (r - 1.0).abs() > cfg.clip_eps {
                    clipped += 1;
                }
                stats.approx_kl += o - l;
                seen += 1;
            }
            stats.policy_loss += g.value(policy_loss).item().as_f64();
            stats.value_loss += value_loss.map(|v| g.value(v).item().as_f64()).unwrap_or(0.0);
            stats.entropy += g.value(entropy).item().as_f64();

            let grads = g.backward(loss);
            let mut gl = collect_grads(&g, &grads, &policy.params());
            stats.grad_norm += clip_grad_norm(&mut gl, cfg.max_grad_norm);
            adam.step(&mut policy.params_mut(), &gl);
            policy.post_update();
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches.max(1) as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.grad_norm /= m;
    stats.mean_ratio = ratio_sum / seen.max(1) as f64;
    stats.clip_fraction = clipped as f64 / seen.max(1) as f64;
    stats.approx_kl /= seen.max(1) as f64;
    if policy.params().iter().any(|p| !p.value.is_finite()) {
        policy.restore(&snapshot);
        return Err(AlgoError::NonFiniteLoss("parameters became non-finite".into()));
    }
    Ok(stats)
}

/// One collect-then-update cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Cumulative environment steps after this iteration.
    pub timesteps: usize,
    pub mean_step_reward: f64,
    /// Mean return of episodes finished during this iteration.
    pub mean_episode_return: Option<f64>,
    pub episodes_finished: usize,
    pub stats: UpdateStats,
}

/// Stateful PPO driver: keeps the optimizer, random streams and rollout
/// cursor across iterations.
#[derive(Debug, Clone)]
pub struct PpoTrainer<S> {
    pub config: PpoConfig,
    adam: Adam<S>,
    policy_rng: Rng,
    shuffle_rng: Rng,
    cursor: RolloutCursor,
    timesteps: usize,
    provenance: String,
}

impl<S: Scalar> PpoTrainer<S> {
    pub fn new(config: PpoConfig, seed: u64) -> Result<Self, AlgoError> {
        config.validate()?;
        Ok(Self {
            adam: Adam::new(AdamConfig::with_lr(config.learning_rate)),
            policy_rng: seeded(derive_seed(seed, stream::POLICY)),
            shuffle_rng: seeded(derive_seed(seed, stream::SHUFFLE)),
            cursor: RolloutCursor::new(derive_seed(seed, stream::ENV)),
            config,
            timesteps: 0,
            provenance: "policy".into(),
        })
    }

    /// Tag recorded on every buffer this trainer collects.
    pub fn with_provenance(mut self, tag: &str) -> Self {
        self.provenance = tag.to_string();
        self
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn remaining(&self) -> usize {
        self.config.total_timesteps.saturating_sub(self.timesteps)
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.config.learning_rate = lr;
    }

    /// Collects up to `num_steps` (capped by the remaining budget) and
    /// updates. Returns the buffer alongside the record for inspection.
    pub fn iterate<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        policy: &mut ActorCritic<S>,
    ) -> Result<(IterationRecord, RolloutBuffer), AlgoError> {
        assert!(policy.has_critic(), "contract violation: PPO needs a critic");
        let n = self.config.num_steps.min(self.remaining());
        assert!(n > 0, "contract violation: PPO budget exhausted");
        let buf = collect_rollout(env, policy, n, Some(&mut self.policy_rng), &mut self.cursor, &self.provenance);
        self.timesteps += n;
        let (adv, ret) = buf.advantages(self.config.gamma, self.config.gae_lambda);
        let stats = ppo_update(policy, &mut self.adam, &buf, &adv, &ret, &self.config, &mut self.shuffle_rng)?;
        let record = IterationRecord {
            timesteps: self.timesteps,
            mean_step_reward: buf.rewards.iter().sum::<f64>() / n as f64,
            mean_episode_return: if buf.episode_returns.is_empty() {
                None
            } else {
                Some(buf.episode_returns.iter().sum::<f64>() / buf.episode_returns.len() as f64)
            },
            episodes_finished: buf.episode_returns.len(),
            stats,
        };
        Ok((record, buf))
    }

    /// Iterates until the timestep budget is spent.
    pub fn train<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        policy: &mut ActorCritic<S>,
    ) -> Result<Vec<IterationRecord>, AlgoError> {
        let mut out = Vec::new();
        while self.remaining() > 0 {
            out.push(self.iterate(env, policy)?.0);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ControlConfig, ControlEnv};

    #[test]
    fn surrogate_examples() {
        assert_eq!(ppo_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(ppo_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(ppo_surrogate(1.0, -3.7, 0.2), -3.7);
    }

    #[test]
    fn first_minibatch_ratios_are_one() {
        let mut env = ControlEnv::new(ControlConfig::line_racer());
        let mut policy = ActorCritic::<f64>::flat(1, 1, &[8], Some(8), &mut seeded(0));
        let cfg = PpoConfig {
            num_steps: 32,
            minibatch_size: 8,
            epochs: 2,
            total_timesteps: 32,
            ..PpoConfig::default()
        };
        let mut t = PpoTrainer::new(cfg, 5).unwrap();
        let (rec, buf) = t.iterate(&mut env, &mut policy).unwrap();
        assert_eq!(buf.len(), 32);
        assert!(rec.stats.first_ratios.iter().all(|r| *r == 1.0));
        assert_eq!(t.remaining(), 0);
    }

    #[test]
    fn deterministic_rollouts_repeat() {
        let policy = ActorCritic::<f64>::flat(3, 2, &[8], Some(8), &mut seeded(0));
        let run = || {
            let mut env = ControlEnv::new(ControlConfig::stick_balance());
            let mut cursor = RolloutCursor::new(4);
            collect_rollout(&mut env, &policy, 64, None, &mut cursor, "eval")
        };
        let (a, b) = (run(), run());
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.len(), 64);
    }
}
