//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Nothing here calls the code under test except to
//! build graphs whose gradients are being checked.
#![allow(dead_code)]

pub mod gradcases;

use ftrl_core::numerics::{Graph, NodeId, Parameterized, Tensor};
use ftrl_core::rng::{seeded, Rng};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Below this magnitude errors are measured absolutely.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `Σ out ⊙ W` for fixed pseudo-random `W`, turning any node into a scalar
/// whose gradient exercises every output element.
pub fn probe(g: &mut Graph<f64>, out: NodeId, seed: u64) -> NodeId {
    let shape = g.shape(out).to_vec();
    let w = uniform(&mut seeded(seed), &shape, -1.0, 1.0);
    let w = g.constant(w);
    let m = g.mul(out, w);
    g.sum(m)
}

/// Worst relative error between the graph's gradient and central
/// differences, over every element of every input.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], build: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
{
    let eval = |xs: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|x| g.variable(x.clone())).collect();
        let out = build(&mut g, &ids);
        g.value(out).item()
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|x| g.variable(x.clone())).collect();
    let out = build(&mut g, &ids);
    let analytic = g.grad(out, &ids);
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let x0 = xs[i].data()[j];
            xs[i].data_mut()[j] = x0 + FD_STEP;
            let up = eval(&xs);
            xs[i].data_mut()[j] = x0 - FD_STEP;
            let down = eval(&xs);
            xs[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[i].data()[j], numeric));
        }
    }
    worst
}

/// Same check against model parameters; `per_tensor` elements are sampled
/// from each parameter tensor.
pub fn param_gradcheck<M, F>(model: &mut M, per_tensor: usize, seed: u64, loss: F) -> (f64, usize)
where
    M: Parameterized<f64>,
    F: Fn(&M, &mut Graph<f64>) -> NodeId,
{
    let mut g = Graph::new();
    let out = loss(model, &mut g);
    let grads = g.backward(out);
    let analytic: Vec<Tensor<f64>> = model
        .params()
        .iter()
        .map(|p| grads.param(&g, p).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let count = model.params().len();
    for k in 0..count {
        let len = model.params()[k].value.len();
        for _ in 0..per_tensor.min(len) {
            let j = rng.random_range(0..len);
            let x0 = model.params()[k].value.data()[j];
            let at = |x: f64, m: &mut M| {
                m.params_mut()[k].value.data_mut()[j] = x;
                let mut g = Graph::new();
                let o = loss(m, &mut g);
                g.value(o).item()
            };
            let up = at(x0 + FD_STEP, model);
            let down = at(x0 - FD_STEP, model);
            model.params_mut()[k].value.data_mut()[j] = x0;
            worst = worst.max(rel_err(analytic[k].data()[j], (up - down) / (2.0 * FD_STEP)));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Advantages by the explicit double sum
/// `A_t = Σ_l (Π_{k<l} γλ(1−d_{t+k})) δ_{t+l}`.
pub fn gae_double_sum(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let live = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + gamma * next_value(t) * live - values[t]
        })
        .collect();
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut total = 0.0;
        for l in 0..(n - t) {
            let mut coef = 1.0;
            for k in 0..l {
                coef *= gamma * lambda * if dones[t + k] { 0.0 } else { 1.0 };
            }
            total += coef * delta[t + l];
        }
        adv[t] = total;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// `2·exp(−MSE) − 1` written out directly.
pub fn reward_oracle(a: &[f64], y: &[f64]) -> f64 {
    let mse = a.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
    2.0 * (-mse).exp() - 1.0
}

/// Plain softmax with max subtraction.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
