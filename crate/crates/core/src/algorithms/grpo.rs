use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ppo_surrogate_node, ActorCritic, AlgoError};
use crate::envs::{Environment, Observation};
use crate::nn::{clip_grad_norm, collect_grads, Adam, AdamConfig};
use crate::numerics::{Graph, NodeId, Parameterized, Scalar, Tensor};
use crate::rng::{derive_seed, seeded, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub eps_std: f64,
    pub clip_eps: f64,
    pub kl_coef: f64,
    /// Rounds between reference-policy refreshes.
    pub ref_refresh: usize,
    pub learning_rate: f64,
    /// Observations collected per round.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub total_timesteps: usize,
    pub max_grad_norm: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            eps_std: 1e-8,
            clip_eps: 0.2,
            kl_coef: 0.0,
            ref_refresh: 1,
            learning_rate: 3e-4,
            batch_size: 64,
            minibatch_size: 64,
            epochs: 4,
            total_timesteps: 500_000,
            max_grad_norm: 0.5,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |m: &str| Err(AlgoError::InvalidConfig(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be >= 2");
        }
        if !(self.eps_std > 0.0) {
            return bad("eps_std must be > 0");
        }
        if !(self.kl_coef >= 0.0) {
            return bad("kl_coef must be >= 0");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be > 0");
        }
        if self.ref_refresh == 0 || self.batch_size == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("ref_refresh, batch_size, minibatch_size and epochs must be >= 1");
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate must be >= 0 and max_grad_norm > 0");
        }
        Ok(())
    }
}

/// `(r_i − mean) / (population std + eps_std)`. Identical rewards give
/// exact zeros; a rounded mean would otherwise leave residue of order
/// `ulp / eps_std`.
pub fn grpo_group_advantages(rewards: &[f64], eps_std: f64) -> Vec<f64> {
    assert!(rewards.len() >= 2, "contract violation: a group needs at least 2 rewards, got {}", rewards.len());
    if rewards.iter().all(|r| *r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + eps_std;
    rewards.iter().map(|r| (r - mean) / sd).collect()
}

/// KL(N(μ, e^ls) ‖ N(μ_ref, e^ls_ref)) for diagonal Gaussians.
pub fn gaussian_kl(mean: &[f64], log_std: &[f64], ref_mean: &[f64], ref_log_std: &[f64]) -> f64 {
    assert!(
        mean.len() == log_std.len() && mean.len() == ref_mean.len() && mean.len() == ref_log_std.len(),
        "contract violation: KL arguments differ in length"
    );
    let mut kl = 0.0;
    for d in 0..mean.len() {
        let var = (2.0 * log_std[d]).exp();
        let ref_var = (2.0 * ref_log_std[d]).exp();
        let dm = mean[d] - ref_mean[d];
        kl += ref_log_std[d] - log_std[d] + (var + dm * dm) / (2.0 * ref_var) - 0.5;
    }
    kl
}

/// Per-row KL of `[B, A]` means with `[1, A]` log-std against constant
/// references; returns `[B, 1]`.
fn gaussian_kl_node<S: Scalar>(
    g: &mut Graph<S>,
    mean: NodeId,
    log_std: NodeId,
    ref_mean: NodeId,
    ref_log_std: NodeId,
) -> NodeId {
    let two_ls = g.scale(log_std, S::of(2.0));
    let var = g.exp(two_ls);
    let dm = g.sub(mean, ref_mean);
    let dm2 = g.square(dm);
    let num = g.add(dm2, var);
    let two_ref = g.scale(ref_log_std, S::of(2.0));
    let ref_var = g.exp(two_ref);
    let ref_var2 = g.scale(ref_var, S::of(2.0));
    let ratio = g.div(num, ref_var2);
    let ls_diff = g.sub(ref_log_std, log_std);
    let terms = g.add(ratio, ls_diff);
    let terms = g.offset(terms, S::of(-0.5));
    g.sum_axis(terms, 1)
}

/// Observations of one round with their sampled groups.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub observations: Vec<Observation>,
    /// `candidates[i][k]` is the k-th action sampled for observation i.
    pub candidates: Vec<Vec<Vec<f64>>>,
    pub old_log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub advantages: Vec<Vec<f64>>,
    pub ref_means: Vec<Vec<f64>>,
    pub ref_log_std: Vec<f64>,
}

impl GroupBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrpoStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub kl: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

fn column<S: Scalar>(g: &mut Graph<S>, v: impl Iterator<Item = f64>) -> NodeId {
    let data: Vec<S> = v.map(S::of).collect();
    let n = data.len();
    g.constant(Tensor::new(vec![n, 1], data).expect("finite group values"))
}

/// Group-averaged clipped surrogate minus `kl_coef`·KL to the reference,
/// over shuffled minibatches of observations.
pub fn grpo_update<S: Scalar>(
    policy: &mut ActorCritic<S>,
    adam: &mut Adam<S>,
    batch: &GroupBatch,
    cfg: &GrpoConfig,
    rng: &mut Rng,
) -> Result<GrpoStats, AlgoError> {
    assert!(!batch.is_empty(), "contract violation: update on an empty group batch");
    let snapshot = policy.snapshot();
    let a_dim = policy.action_dim();
    let mut stats = GrpoStats::default();
    let (mut ratio_sum, mut clipped, mut seen) = (0.0, 0usize, 0usize);
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for mb in idx.chunks(cfg.minibatch_size) {
            let obs: Vec<&Observation> = mb.iter().map(|&i| &batch.observations[i]).collect();
            let mut g = Graph::new();
            let out = policy.forward(&mut g, &obs);
            let groups = batch.candidates[mb[0]].len();
            let mut surrs = Vec::with_capacity(groups);
            let mut ratios = Vec::with_capacity(groups);
            for k in 0..groups {
                let acts: Vec<&[f64]> = mb.iter().map(|&i| batch.candidates[i][k].as_slice()).collect();
                let lp = ActorCritic::log_prob_node(&mut g, &out, &acts);
                let old = column(&mut g, mb.iter().map(|&i| batch.old_log_probs[i][k]));
                let diff = g.sub(lp, old);
                let ratio = g.exp(diff);
                let adv = column(&mut g, mb.iter().map(|&i| batch.advantages[i][k]));
                surrs.push(ppo_surrogate_node(&mut g, ratio, adv, cfg.clip_eps));
                ratios.push(ratio);
            }
            let all = g.concat_cols(&surrs);
            let objective = g.mean(all);
            let policy_loss = g.neg(objective);
            let mut loss = policy_loss;
            let ref_mean = g.constant(
                Tensor::new(
                    vec![mb.len(), a_dim],
                    mb.iter().flat_map(|&i| batch.ref_means[i].iter().map(|&v| S::of(v))).collect(),
                )
                .expect("finite reference means"),
            );
            let ref_ls = g.constant(Tensor::row(&batch.ref_log_std.iter().map(|&v| S::of(v)).collect::<Vec<_>>()));
            let kl_rows = gaussian_kl_node(&mut g, out.mean, out.log_std, ref_mean, ref_ls);
            let kl = g.mean(kl_rows);
            if cfg.kl_coef > 0.0 {
                let pen = g.scale(kl, S::of(cfg.kl_coef));
                loss = g.add(loss, pen);
            }
            let loss_value = g.value(loss).item().as_f64();
            if !loss_value.is_finite() || g.first_non_finite().is_some() {
                policy.restore(&snapshot);
                return Err(AlgoError::NonFiniteLoss(format!("GRPO loss {loss_value}")));
            }
            for r in &ratios {
                for v in g.value(*r).to_f64_vec() {
                    ratio_sum += v;
                    if (v - 1.0).abs() > cfg.clip_eps {
                        clipped += 1;
                    }
                    seen += 1;
                }
            }
            stats.policy_loss += g.value(policy_loss).item().as_f64();
            stats.kl += g.value(kl).item().as_f64();
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
    stats.kl /= m;
    stats.grad_norm /= m;
    stats.mean_ratio = ratio_sum / seen.max(1) as f64;
    stats.clip_fraction = clipped as f64 / seen.max(1) as f64;
    if policy.params().iter().any(|p| !p.value.is_finite()) {
        policy.restore(&snapshot);
        return Err(AlgoError::NonFiniteLoss("parameters became non-finite".into()));
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoRoundRecord {
    /// Cumulative environment steps after this round.
    pub timesteps: usize,
    /// Mean reward over every sampled candidate.
    pub mean_candidate_reward: f64,
    /// Mean reward of the actions actually executed.
    pub mean_step_reward: f64,
    pub stats: GrpoStats,
}

/// Stateful GRPO driver. Each environment step is a one-step decision:
/// `G` candidates are scored against the current state, the first is
/// executed.
#[derive(Debug, Clone)]
pub struct GrpoTrainer<S> {
    pub config: GrpoConfig,
    adam: Adam<S>,
    policy_rng: Rng,
    shuffle_rng: Rng,
    env_seed: u64,
    episodes: u64,
    pending: Option<Observation>,
    reference: Option<ActorCritic<S>>,
    rounds: usize,
    timesteps: usize,
}

impl<S: Scalar> GrpoTrainer<S> {
    pub fn new(config: GrpoConfig, seed: u64) -> Result<Self, AlgoError> {
        config.validate()?;
        Ok(Self {
            adam: Adam::new(AdamConfig::with_lr(config.learning_rate)),
            policy_rng: seeded(derive_seed(seed, stream::POLICY)),
            shuffle_rng: seeded(derive_seed(seed, stream::SHUFFLE)),
            env_seed: derive_seed(seed, stream::ENV),
            episodes: 0,
            pending: None,
            reference: None,
            rounds: 0,
            timesteps: 0,
            config,
        })
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

    /// Samples a group batch of up to `batch_size` steps without updating.
    pub fn collect<E: Environment + ?Sized>(&mut self, env: &mut E, policy: &ActorCritic<S>) -> GroupBatch {
        let n = self.config.batch_size.min(self.remaining());
        assert!(n > 0, "contract violation: GRPO budget exhausted");
        let fresh = self.reference.is_none() || self.rounds % self.config.ref_refresh == 0;
        if fresh {
            self.reference = Some(policy.clone());
        }
        let reference = self.reference.as_ref().expect("reference set above");
        let ref_log_std = reference.log_std.value.to_f64_vec();
        let mut batch = GroupBatch {
            observations: Vec::with_capacity(n),
            candidates: Vec::with_capacity(n),
            old_log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            advantages: Vec::with_capacity(n),
            ref_means: Vec::with_capacity(n),
            ref_log_std,
        };
        let mut obs = match self.pending.take() {
            Some(o) if !env.is_done() => o,
            _ => env.reset(derive_seed(self.env_seed, self.episodes)),
        };
        for _ in 0..n {
            let group = policy.sample_group(&obs, self.config.group_size, &mut self.policy_rng);
            let rewards: Vec<f64> = group.iter().map(|s| env.score(&s.action)).collect();
            let lps: Vec<f64> = group.iter().map(|s| s.log_prob).collect();
            let ref_mean = if fresh {
                group[0].mean.clone()
            } else {
                reference.mean_actions(&[&obs]).remove(0)
            };
            let cands: Vec<Vec<f64>> = group.into_iter().map(|s| s.action).collect();
            batch.ref_means.push(ref_mean);
            batch.advantages.push(grpo_group_advantages(&rewards, self.config.eps_std));
            let step = env.step(&cands[0]);
            batch.rewards.push(rewards);
            batch.candidates.push(cands);
            batch.old_log_probs.push(lps);
            batch.observations.push(obs);
            obs = if step.done {
                self.episodes += 1;
                env.reset(derive_seed(self.env_seed, self.episodes))
            } else {
                step.observation
            };
        }
        self.pending = Some(obs);
        self.timesteps += n;
        self.rounds += 1;
        batch
    }

    /// One collect-then-update round.
    pub fn round<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        policy: &mut ActorCritic<S>,
    ) -> Result<GrpoRoundRecord, AlgoError> {
        let batch = self.collect(env, policy);
        let stats = grpo_update(policy, &mut self.adam, &batch, &self.config, &mut self.shuffle_rng)?;
        let total: f64 = batch.rewards.iter().flatten().sum();
        let count = batch.rewards.iter().map(Vec::len).sum::<usize>();
        Ok(GrpoRoundRecord {
            timesteps: self.timesteps,
            mean_candidate_reward: total / count as f64,
            mean_step_reward: batch.rewards.iter().map(|r| r[0]).sum::<f64>() / batch.len() as f64,
            stats,
        })
    }

    pub fn train<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        policy: &mut ActorCritic<S>,
    ) -> Result<Vec<GrpoRoundRecord>, AlgoError> {
        let mut out = Vec::new();
        while self.remaining() > 0 {
            out.push(self.round(env, policy)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(grpo_group_advantages(&[5.0, 5.0, 5.0], 1e-8), vec![0.0, 0.0, 0.0]);
        let a = grpo_group_advantages(&[1.0, 2.0, 3.0], 1e-12);
        assert!((a[0] + 1.224745).abs() < 1e-6);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl(&[0.3], &[0.1], &[0.3], &[0.1]), 0.0);
        assert!((gaussian_kl(&[1.0], &[0.0], &[0.0], &[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_node_matches_closed_form() {
        let mut g = Graph::<f64>::new();
        let m = g.constant(Tensor::matrix(2, 2, vec![0.1, -0.4, 1.0, 0.5]));
        let ls = g.constant(Tensor::row(&[0.2, -0.3]));
        let rm = g.constant(Tensor::matrix(2, 2, vec![0.0, 0.0, 0.7, 0.5]));
        let rls = g.constant(Tensor::row(&[-0.1, 0.4]));
        let kl = gaussian_kl_node(&mut g, m, ls, rm, rls);
        let v = g.value(kl).data();
        let e0 = gaussian_kl(&[0.1, -0.4], &[0.2, -0.3], &[0.0, 0.0], &[-0.1, 0.4]);
        let e1 = gaussian_kl(&[1.0, 0.5], &[0.2, -0.3], &[0.7, 0.5], &[-0.1, 0.4]);
        assert!((v[0] - e0).abs() < 1e-14 && (v[1] - e1).abs() < 1e-14);
    }

    #[test]
    fn config_rejects_small_group() {
        let c = GrpoConfig {
            group_size: 1,
            ..GrpoConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
