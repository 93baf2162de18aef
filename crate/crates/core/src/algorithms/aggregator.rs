use crate::nn::Linear;
use crate::numerics::{Graph, NodeId, Param, Parameterized, Scalar, Tensor};
use crate::rng::Rng;

/// Softmax attention over an environment encoding and subagent actions.
///
/// Scores are `[f_env(e), f_sub(α_1), …, f_sub(α_n)]`; the output is the
/// weight-averaged common-dimension encodings `E_env(e)` and `E_sub(α_i)`.
#[derive(Debug, Clone)]
pub struct AttentionAggregator<S> {
    pub env_score: Linear<S>,
    pub sub_score: Linear<S>,
    pub env_encode: Linear<S>,
    pub sub_encode: Linear<S>,
}

/// Numeric result of one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub output: Vec<f64>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
    /// `E_env(e)` followed by each `E_sub(α_i)`.
    pub encodings: Vec<Vec<f64>>,
}

pub(crate) struct AggregationNodes {
    pub output: NodeId,
    pub weights: NodeId,
    pub scores: NodeId,
    pub encodings: Vec<NodeId>,
}

impl<S: Scalar> AttentionAggregator<S> {
    pub fn new(env_dim: usize, action_dim: usize, enc_dim: usize, rng: &mut Rng) -> Self {
        Self {
            env_score: Linear::new("agg.env_score", env_dim, 1, rng),
            sub_score: Linear::new("agg.sub_score", action_dim, 1, rng),
            env_encode: Linear::new("agg.env_encode", env_dim, enc_dim, rng),
            sub_encode: Linear::new("agg.sub_encode", action_dim, enc_dim, rng),
        }
    }

    /// Zeroes both scorers, making every weight `1/(n+1)`.
    pub fn zero_scorers(&mut self) {
        for p in self.env_score.params_mut().into_iter().chain(self.sub_score.params_mut()) {
            p.value = Tensor::zeros(p.value.shape().to_vec());
        }
    }

    pub fn env_dim(&self) -> usize {
        self.env_encode.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.sub_encode.input_dim()
    }

    pub fn enc_dim(&self) -> usize {
        self.env_encode.output_dim()
    }

    /// `env` is `[B, env_dim]`; each action is `[B, action_dim]`.
    pub(crate) fn forward(&self, g: &mut Graph<S>, env: NodeId, actions: &[NodeId]) -> AggregationNodes {
        assert!(!actions.is_empty(), "contract violation: aggregation needs at least one subagent action");
        let b = g.shape(env)[0];
        assert_eq!(
            g.shape(env)[1],
            self.env_dim(),
            "contract violation: environment encoding width {} vs {}",
            g.shape(env)[1],
            self.env_dim()
        );
        for &a in actions {
            let s = g.shape(a);
            assert!(
                s == [b, self.action_dim()],
                "contract violation: subagent action shape {:?} vs [{b}, {}]",
                s,
                self.action_dim()
            );
        }
        let mut scores = vec![self.env_score.forward(g, env)];
        let mut encodings = vec![self.env_encode.forward(g, env)];
        for &a in actions {
            scores.push(self.sub_score.forward(g, a));
            encodings.push(self.sub_encode.forward(g, a));
        }
        let scores = g.concat_cols(&scores);
        let weights = g.softmax(scores, 1);
        let mut output = None;
        for (k, &enc) in encodings.iter().enumerate() {
            let w = g.slice_cols(weights, k, k + 1);
            let term = g.mul(w, enc);
            output = Some(match output {
                None => term,
                Some(acc) => g.add(acc, term),
            });
        }
        AggregationNodes {
            output: output.expect("at least one term"),
            weights,
            scores,
            encodings,
        }
    }

    pub fn aggregate(&self, env: &[f64], actions: &[Vec<f64>]) -> Aggregation {
        let mut g = Graph::<S>::new();
        let to = |v: &[f64]| Tensor::new(vec![1, v.len()], v.iter().map(|&x| S::of(x)).collect()).expect("finite input");
        let e = g.constant(to(env));
        let acts: Vec<NodeId> = actions.iter().map(|a| g.constant(to(a))).collect();
        let nodes = self.forward(&mut g, e, &acts);
        let read = |g: &Graph<S>, n: NodeId| g.value(n).to_f64_vec();
        Aggregation {
            output: read(&g, nodes.output),
            weights: read(&g, nodes.weights),
            scores: read(&g, nodes.scores),
            encodings: nodes.encodings.iter().map(|&n| read(&g, n)).collect(),
        }
    }
}

impl<S: Scalar> Parameterized<S> for AttentionAggregator<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut v = self.env_score.params();
        v.extend(self.sub_score.params());
        v.extend(self.env_encode.params());
        v.extend(self.sub_encode.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut v = self.env_score.params_mut();
        v.extend(self.sub_score.params_mut());
        v.extend(self.env_encode.params_mut());
        v.extend(self.sub_encode.params_mut());
        v
    }
}
