use serde::{Deserialize, Serialize};

use crate::numerics::{Gradients, Graph, Param, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
///
/// Moment buffers are positional: callers must pass the same parameter list
/// in the same order on every step.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    steps: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Frozen parameters and parameters without a gradient are left
    /// untouched, bit for bit.
    pub fn step(&mut self, params: &mut [&mut Param<S>], grads: &[Option<Tensor<S>>]) {
        assert_eq!(
            params.len(),
            grads.len(),
            "contract violation: {} parameters but {} gradients",
            params.len(),
            grads.len()
        );
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "contract violation: parameter list changed");
        self.steps += 1;
        let c = &self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let lr = S::of(c.learning_rate);
        let eps = S::of(c.eps);
        let t = self.steps as i32;
        let corr1 = S::one() - S::of(c.beta1.powi(t));
        let corr2 = S::one() - S::of(c.beta2.powi(t));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if p.frozen {
                continue;
            }
            assert_eq!(g.len(), p.value.len(), "contract violation: gradient size of {}", p.name());
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (i, (w, &gi)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (S::one() - b1) * gi;
                v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
                let mh = m[i] / corr1;
                let vh = v[i] / corr2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Gradients for `params` in order; `None` for frozen or disconnected ones.
pub fn collect_grads<S: Scalar>(
    graph: &Graph<S>,
    grads: &Gradients<S>,
    params: &[&Param<S>],
) -> Vec<Option<Tensor<S>>> {
    params
        .iter()
        .map(|p| {
            if p.frozen {
                None
            } else {
                grads.param(graph, p).cloned()
            }
        })
        .collect()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [Option<Tensor<S>>], max_norm: f64) -> f64 {
    let mut total = S::zero();
    for g in grads.iter().flatten() {
        total += g.sum_squares();
    }
    let norm = total.sqrt().as_f64();
    if norm > max_norm && norm.is_finite() {
        let factor = S::of(max_norm / (norm + 1e-6));
        for g in grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
    norm
}
