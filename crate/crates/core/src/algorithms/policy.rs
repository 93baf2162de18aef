use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};

use super::AttentionAggregator;
use crate::backbone::Backbone;
use crate::envs::Observation;
use crate::nn::{Mlp, ValueNet};
use crate::numerics::{Graph, NodeId, Param, Parameterized, Scalar, Tensor};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// A frozen per-slice policy feeding the aggregator.
#[derive(Debug, Clone)]
pub struct Subagent<S> {
    pub columns: Range<usize>,
    pub policy: ActorCritic<S>,
}

#[derive(Debug, Clone)]
pub enum SubagentSource<S> {
    /// Mean actions of trained subagents on their column slices.
    Policies(Vec<Subagent<S>>),
    /// `count` copies of [`Observation::context`]; for planted-signal tests.
    Oracle { count: usize },
}

/// Superagent feature extractor: a base trunk encodes the observation and
/// attention fuses it with the subagents' actions.
#[derive(Debug, Clone)]
pub struct AggregatedTrunk<S> {
    pub base: Trunk<S>,
    pub aggregator: AttentionAggregator<S>,
    pub source: SubagentSource<S>,
}

#[derive(Debug, Clone)]
pub enum Trunk<S> {
    /// The flattened observation.
    Flat { input_dim: usize },
    /// Backbone latent.
    Backbone(Backbone<S>),
    Aggregated(Box<AggregatedTrunk<S>>),
}

#[derive(Debug, Clone)]
pub enum Head<S> {
    /// The backbone's own projection head (actor paradigm).
    Projection,
    Mlp(Mlp<S>),
}

/// Graph nodes of one batched policy evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PolicyOutput {
    pub features: NodeId,
    /// `[B, A]`
    pub mean: NodeId,
    /// `[1, A]`
    pub log_std: NodeId,
    /// `[B, 1]`
    pub value: Option<NodeId>,
}

/// One sampled (or mean) action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActSample {
    pub action: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
    pub value: Option<f64>,
}

/// Diagonal Gaussian policy with a state-independent learnable `log_std`
/// and an optional state-value critic over the trunk features.
#[derive(Debug, Clone)]
pub struct ActorCritic<S> {
    pub trunk: Trunk<S>,
    pub head: Head<S>,
    pub log_std: Param<S>,
    pub critic: Option<ValueNet<S>>,
    action_dim: usize,
}

fn to_tensor<S: Scalar>(rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> Tensor<S> {
    Tensor::new(vec![rows, cols], data.map(S::of).collect())
        .unwrap_or_else(|e| panic!("contract violation: policy input {e}"))
}

impl<S: Scalar> Trunk<S> {
    pub fn feature_dim(&self) -> usize {
        match self {
            Trunk::Flat { input_dim } => *input_dim,
            Trunk::Backbone(b) => b.config().model_dim,
            Trunk::Aggregated(a) => a.aggregator.enc_dim(),
        }
    }

    pub fn backbone(&self) -> Option<&Backbone<S>> {
        match self {
            Trunk::Backbone(b) => Some(b),
            Trunk::Aggregated(a) => a.base.backbone(),
            Trunk::Flat { .. } => None,
        }
    }

    pub fn backbone_mut(&mut self) -> Option<&mut Backbone<S>> {
        match self {
            Trunk::Backbone(b) => Some(b),
            Trunk::Aggregated(a) => a.base.backbone_mut(),
            Trunk::Flat { .. } => None,
        }
    }

    fn features(&self, g: &mut Graph<S>, obs: &[&Observation]) -> NodeId {
        match self {
            Trunk::Flat { input_dim } => {
                for o in obs {
                    assert_eq!(
                        o.data.len(),
                        *input_dim,
                        "contract violation: observation has {} values, policy expects {}",
                        o.data.len(),
                        input_dim
                    );
                }
                let t = to_tensor(obs.len(), *input_dim, obs.iter().flat_map(|o| o.data.iter().copied()));
                g.constant(t)
            }
            Trunk::Backbone(b) => {
                let states: Vec<&[f64]> = obs.iter().map(|o| o.data.as_slice()).collect();
                b.latent_batch(g, &states)
            }
            Trunk::Aggregated(a) => {
                let e = a.base.features(g, obs);
                let p = a.aggregator.action_dim();
                let actions: Vec<NodeId> = match &a.source {
                    SubagentSource::Policies(subs) => subs
                        .iter()
                        .map(|s| {
                            let sliced: Vec<Observation> = obs
                                .iter()
                                .map(|o| o.slice_cols(s.columns.start, s.columns.end))
                                .collect();
                            let refs: Vec<&Observation> = sliced.iter().collect();
                            let means = s.policy.mean_actions(&refs);
                            g.constant(to_tensor(obs.len(), p, means.into_iter().flatten()))
                        })
                        .collect(),
                    SubagentSource::Oracle { count } => {
                        for o in obs {
                            assert_eq!(
                                o.context.len(),
                                p,
                                "contract violation: oracle subagents need a context of length {p}"
                            );
                        }
                        let t = to_tensor::<S>(obs.len(), p, obs.iter().flat_map(|o| o.context.iter().copied()));
                        (0..*count).map(|_| g.constant(t.clone())).collect()
                    }
                };
                a.aggregator.forward(g, e, &actions).output
            }
        }
    }

    fn params(&self) -> Vec<&Param<S>> {
        match self {
            Trunk::Flat { .. } => Vec::new(),
            Trunk::Backbone(b) => b.params(),
            Trunk::Aggregated(a) => {
                let mut v = a.base.params();
                v.extend(a.aggregator.params());
                v
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Trunk::Flat { .. } => Vec::new(),
            Trunk::Backbone(b) => b.params_mut(),
            Trunk::Aggregated(a) => {
                let mut v = a.base.params_mut();
                v.extend(a.aggregator.params_mut());
                v
            }
        }
    }
}

impl<S: Scalar> ActorCritic<S> {
    fn assemble(trunk: Trunk<S>, head: Head<S>, action_dim: usize, critic_hidden: Option<usize>, rng: &mut Rng) -> Self {
        let critic = critic_hidden.map(|h| ValueNet::new(trunk.feature_dim(), h, rng));
        Self {
            trunk,
            head,
            log_std: Param::new("log_std", Tensor::zeros(vec![1, action_dim])),
            critic,
            action_dim,
        }
    }

    /// MLP policy on the flattened observation.
    pub fn flat(
        input_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        critic_hidden: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let head = Head::Mlp(Mlp::new("actor", input_dim, hidden, action_dim, rng));
        Self::assemble(Trunk::Flat { input_dim }, head, action_dim, critic_hidden, rng)
    }

    /// The backbone's projection head emits the action mean.
    pub fn actor_paradigm(backbone: Backbone<S>, critic_hidden: Option<usize>, rng: &mut Rng) -> Self {
        let p = backbone.config().horizon;
        Self::assemble(Trunk::Backbone(backbone), Head::Projection, p, critic_hidden, rng)
    }

    /// A separate MLP head maps the backbone latent to the action mean.
    pub fn latent_paradigm(
        backbone: Backbone<S>,
        action_dim: usize,
        hidden: &[usize],
        zero_head: bool,
        critic_hidden: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let d = backbone.config().model_dim;
        let mlp = if zero_head {
            Mlp::with_zero_output("actor", d, hidden, action_dim, rng)
        } else {
            Mlp::new("actor", d, hidden, action_dim, rng)
        };
        Self::assemble(Trunk::Backbone(backbone), Head::Mlp(mlp), action_dim, critic_hidden, rng)
    }

    /// Superagent over an aggregated trunk.
    pub fn aggregated(
        trunk: AggregatedTrunk<S>,
        action_dim: usize,
        hidden: &[usize],
        critic_hidden: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let enc = trunk.aggregator.enc_dim();
        let head = Head::Mlp(Mlp::new("actor", enc, hidden, action_dim, rng));
        Self::assemble(Trunk::Aggregated(Box::new(trunk)), head, action_dim, critic_hidden, rng)
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn has_critic(&self) -> bool {
        self.critic.is_some()
    }

    pub fn backbone(&self) -> Option<&Backbone<S>> {
        self.trunk.backbone()
    }

    pub fn backbone_mut(&mut self) -> Option<&mut Backbone<S>> {
        self.trunk.backbone_mut()
    }

    pub fn forward(&self, g: &mut Graph<S>, obs: &[&Observation]) -> PolicyOutput {
        assert!(!obs.is_empty(), "contract violation: empty observation batch");
        let features = self.trunk.features(g, obs);
        let mean = match &self.head {
            Head::Projection => {
                let b = self
                    .trunk
                    .backbone()
                    .expect("projection head requires a backbone trunk");
                b.head_node(g, features)
            }
            Head::Mlp(m) => m.forward(g, features),
        };
        let log_std = g.param(&self.log_std);
        let value = self.critic.as_ref().map(|c| c.forward(g, features));
        PolicyOutput {
            features,
            mean,
            log_std,
            value,
        }
    }

    /// `[B, 1]` log-densities of `actions` under `out`.
    pub fn log_prob_node(g: &mut Graph<S>, out: &PolicyOutput, actions: &[&[f64]]) -> NodeId {
        let a = g.shape(out.mean)[1];
        for act in actions {
            assert_eq!(act.len(), a, "contract violation: action length {} vs {a}", act.len());
        }
        let t = to_tensor(actions.len(), a, actions.iter().flat_map(|v| v.iter().copied()));
        let x = g.constant(t);
        let lp = g.gaussian_log_prob(x, out.mean, out.log_std);
        g.sum_axis(lp, 1)
    }

    /// Samples `mean + exp(log_std)·ε`, or returns the mean when `rng` is
    /// `None`.
    pub fn act(&self, obs: &Observation, rng: Option<&mut Rng>) -> ActSample {
        let mut g = Graph::new();
        let out = self.forward(&mut g, &[obs]);
        let mean = g.value(out.mean).to_f64_vec();
        let action = match rng {
            Some(rng) => {
                let ls = g.value(out.log_std).to_f64_vec();
                mean.iter()
                    .zip(&ls)
                    .map(|(m, l)| {
                        let eps: f64 = StandardNormal.sample(rng);
                        m + l.exp() * eps
                    })
                    .collect()
            }
            None => mean.clone(),
        };
        let lp = Self::log_prob_node(&mut g, &out, &[&action]);
        ActSample {
            log_prob: g.value(lp).item().as_f64(),
            value: out.value.map(|v| g.value(v).item().as_f64()),
            action,
            mean,
        }
    }

    /// `count` samples for one observation from a single forward pass.
    pub fn sample_group(&self, obs: &Observation, count: usize, rng: &mut Rng) -> Vec<ActSample> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, &[obs]);
        let mean = g.value(out.mean).to_f64_vec();
        let ls = g.value(out.log_std).to_f64_vec();
        let value = out.value.map(|v| g.value(v).item().as_f64());
        (0..count)
            .map(|_| {
                let action: Vec<f64> = mean
                    .iter()
                    .zip(&ls)
                    .map(|(m, l)| {
                        let eps: f64 = StandardNormal.sample(rng);
                        m + l.exp() * eps
                    })
                    .collect();
                let lp = Self::log_prob_node(&mut g, &out, &[&action]);
                ActSample {
                    log_prob: g.value(lp).item().as_f64(),
                    value,
                    action,
                    mean: mean.clone(),
                }
            })
            .collect()
    }

    /// Evaluation-mode action means for a batch.
    pub fn mean_actions(&self, obs: &[&Observation]) -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, obs);
        g.value(out.mean)
            .to_f64_vec()
            .chunks(self.action_dim)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Critic estimates for a batch.
    pub fn values(&self, obs: &[&Observation]) -> Vec<f64> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, obs);
        let v = out.value.expect("contract violation: policy has no critic");
        g.value(v).to_f64_vec()
    }

    /// Clamps `log_std` into its allowed band.
    pub fn post_update(&mut self) {
        let (lo, hi) = (S::of(LOG_STD_MIN), S::of(LOG_STD_MAX));
        for v in self.log_std.value.data_mut() {
            *v = v.max(lo).min(hi);
        }
    }
}

impl<S: Scalar> Parameterized<S> for ActorCritic<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut v = self.trunk.params();
        if let Head::Mlp(m) = &self.head {
            v.extend(m.params());
        }
        v.push(&self.log_std);
        if let Some(c) = &self.critic {
            v.extend(c.params());
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut v = self.trunk.params_mut();
        if let Head::Mlp(m) = &mut self.head {
            v.extend(m.params_mut());
        }
        v.push(&mut self.log_std);
        if let Some(c) = &mut self.critic {
            v.extend(c.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;
    use crate::rng::seeded;

    fn cfg() -> BackboneConfig {
        BackboneConfig {
            context_length: 4,
            num_features: 3,
            horizon: 2,
            model_dim: 8,
            num_heads: 2,
            num_layers: 2,
            ff_dim: 8,
            dropout: 0.0,
        }
    }

    fn obs(k: f64) -> Observation {
        Observation::new(4, 3, (0..12).map(|i| (i as f64 * k).sin()).collect())
    }

    #[test]
    fn actor_paradigm_mean_is_backbone_forecast() {
        let b = Backbone::<f64>::new(cfg(), 3);
        let o = obs(0.3);
        let expect = b.forward_predict(&o.data);
        let ac = ActorCritic::actor_paradigm(b, Some(16), &mut seeded(0));
        assert_eq!(ac.act(&o, None).action, expect);
    }

    #[test]
    fn zero_latent_head_gives_zero_mean() {
        let b = Backbone::<f64>::new(cfg(), 3);
        let ac = ActorCritic::latent_paradigm(b, 2, &[8], true, None, &mut seeded(0));
        assert_eq!(ac.act(&obs(0.7), None).mean, vec![0.0, 0.0]);
        assert_eq!(ac.act(&obs(-1.1), None).mean, vec![0.0, 0.0]);
    }

    #[test]
    fn recorded_log_prob_matches_batched_recompute() {
        let ac = ActorCritic::<f64>::flat(12, 2, &[8], Some(8), &mut seeded(1));
        let mut rng = seeded(9);
        let (o1, o2) = (obs(0.2), obs(0.9));
        let s1 = ac.act(&o1, Some(&mut rng));
        let s2 = ac.act(&o2, Some(&mut rng));
        let mut g = Graph::new();
        let out = ac.forward(&mut g, &[&o1, &o2]);
        let lp = ActorCritic::log_prob_node(&mut g, &out, &[&s1.action, &s2.action]);
        assert_eq!(g.value(lp).data(), &[s1.log_prob, s2.log_prob]);
        let v = g.value(out.value.unwrap()).data();
        assert_eq!(v, &[s1.value.unwrap(), s2.value.unwrap()]);
    }

    #[test]
    fn group_samples_match_single_draws() {
        let ac = ActorCritic::<f64>::flat(12, 2, &[8], None, &mut seeded(4));
        let o = obs(0.4);
        let group = ac.sample_group(&o, 3, &mut seeded(7));
        let mut rng = seeded(7);
        for s in &group {
            assert_eq!(*s, ac.act(&o, Some(&mut rng)));
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let mut ac = ActorCritic::<f64>::flat(12, 2, &[4], None, &mut seeded(1));
        ac.log_std.value = Tensor::row(&[-9.0, 7.0]);
        ac.post_update();
        assert_eq!(ac.log_std.value.data(), &[-5.0, 2.0]);
    }
}
