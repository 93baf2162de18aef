//! Randomized finite-difference cases for every differentiable primitive.

use ftrl_core::backbone::BackboneConfig;
use ftrl_core::nn::Mlp;
use ftrl_core::numerics::{Graph, NodeId, Tensor};
use ftrl_core::rng::{derive_seed, seeded, Rng};
use ftrl_core::Backbone;
use rand::Rng as _;

use super::{gradcheck, param_gradcheck, probe, uniform};

type Build = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

impl Case {
    pub fn check(&self) -> f64 {
        gradcheck(&self.inputs, &self.build)
    }
}

/// Keeps entries at least `margin` away from every kink in `kinks`.
fn away_from(mut t: Tensor<f64>, kinks: &[f64], margin: f64, rng: &mut Rng) -> Tensor<f64> {
    for v in t.data_mut() {
        while kinks.iter().any(|k| (*v - k).abs() < margin) {
            *v = rng.random_range(-2.0..2.0);
        }
    }
    t
}

fn shape2(rng: &mut Rng) -> [usize; 2] {
    [rng.random_range(1..4), rng.random_range(1..5)]
}

fn case(name: &'static str, inputs: Vec<Tensor<f64>>, seed: u64, f: fn(&mut Graph<f64>, &[NodeId]) -> NodeId) -> Case {
    Case {
        name,
        inputs,
        build: Box::new(move |g, x| {
            let out = f(g, x);
            probe(g, out, seed)
        }),
    }
}

/// `per_op` random cases for each primitive.
pub fn primitive_cases(per_op: usize, seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    for k in 0..per_op {
        let rng = &mut seeded(derive_seed(seed, k as u64));
        let s = derive_seed(seed, 10_000 + k as u64);
        let [r, c] = shape2(rng);
        let u = |rng: &mut Rng, sh: &[usize]| uniform(rng, sh, -2.0, 2.0);
        out.push(case("add", vec![u(rng, &[r, c]), u(rng, &[1, c])], s, |g, x| g.add(x[0], x[1])));
        out.push(case("sub", vec![u(rng, &[r, c]), u(rng, &[r, 1])], s, |g, x| g.sub(x[0], x[1])));
        out.push(case("mul", vec![u(rng, &[r, c]), u(rng, &[r, c])], s, |g, x| g.mul(x[0], x[1])));
        let den = uniform(rng, &[1, c], 0.5, 2.0);
        out.push(case("div", vec![u(rng, &[r, c]), den], s, |g, x| g.div(x[0], x[1])));
        let a = u(rng, &[r, c]);
        let mut b = u(rng, &[r, c]);
        for (bv, av) in b.data_mut().iter_mut().zip(a.data()) {
            while (*bv - av).abs() < 1e-2 {
                *bv = rng.random_range(-2.0..2.0);
            }
        }
        out.push(case("minimum", vec![a, b], s, |g, x| g.minimum(x[0], x[1])));
        out.push(case("neg", vec![u(rng, &[r, c])], s, |g, x| g.neg(x[0])));
        out.push(case("scale", vec![u(rng, &[r, c])], s, |g, x| g.scale(x[0], -1.7)));
        out.push(case("offset", vec![u(rng, &[r, c])], s, |g, x| g.offset(x[0], 0.3)));
        out.push(case("tanh", vec![u(rng, &[r, c])], s, |g, x| g.tanh(x[0])));
        let t = u(rng, &[r, c]);
        out.push(case("relu", vec![away_from(t, &[0.0], 1e-2, rng)], s, |g, x| g.relu(x[0])));
        out.push(case("exp", vec![u(rng, &[r, c])], s, |g, x| g.exp(x[0])));
        out.push(case("log", vec![uniform(rng, &[r, c], 0.2, 2.0)], s, |g, x| g.log(x[0])));
        out.push(case("square", vec![u(rng, &[r, c])], s, |g, x| g.square(x[0])));
        out.push(case("sqrt", vec![uniform(rng, &[r, c], 0.2, 2.0)], s, |g, x| g.sqrt(x[0])));
        let t = u(rng, &[r, c]);
        out.push(case("clamp", vec![away_from(t, &[-0.5, 0.5], 1e-2, rng)], s, |g, x| g.clamp(x[0], -0.5, 0.5)));
        let n = rng.random_range(1..4);
        out.push(case("matmul", vec![u(rng, &[r, c]), u(rng, &[c, n])], s, |g, x| g.matmul(x[0], x[1])));
        out.push(case("transpose", vec![u(rng, &[r, c])], s, |g, x| g.transpose(x[0])));
        out.push(case("reshape", vec![u(rng, &[r, c])], s, |g, x| {
            let n = g.value(x[0]).len();
            g.reshape(x[0], vec![n, 1])
        }));
        out.push(case("sum", vec![u(rng, &[r, c])], s, |g, x| {
            let v = g.sum(x[0]);
            g.square(v)
        }));
        out.push(case("mean", vec![u(rng, &[r, c])], s, |g, x| {
            let v = g.mean(x[0]);
            g.square(v)
        }));
        out.push(case("sum_axis0", vec![u(rng, &[r, c])], s, |g, x| g.sum_axis(x[0], 0)));
        out.push(case("mean_axis1", vec![u(rng, &[r, c])], s, |g, x| g.mean_axis(x[0], 1)));
        out.push(case("softmax_axis1", vec![u(rng, &[r, c + 1])], s, |g, x| g.softmax(x[0], 1)));
        out.push(case("softmax_axis0", vec![u(rng, &[r + 1, c])], s, |g, x| g.softmax(x[0], 0)));
        out.push(case("layer_norm", vec![u(rng, &[r, c + 1])], s, |g, x| g.layer_norm(x[0], 1, 1e-5)));
        out.push(case(
            "gaussian_log_prob",
            vec![u(rng, &[r, c]), u(rng, &[r, c]), uniform(rng, &[1, c], -1.0, 1.0)],
            s,
            |g, x| g.gaussian_log_prob(x[0], x[1], x[2]),
        ));
        out.push(case("slice_cols", vec![u(rng, &[r, c + 1])], s, |g, x| {
            let w = g.shape(x[0])[1];
            g.slice_cols(x[0], 1, w)
        }));
        out.push(case("concat_cols", vec![u(rng, &[r, c]), u(rng, &[r, 2])], s, |g, x| g.concat_cols(&[x[0], x[1]])));
        out.push(case("concat_rows", vec![u(rng, &[r, c]), u(rng, &[2, c])], s, |g, x| g.concat_rows(&[x[0], x[1]])));
    }
    out
}

/// Mean squared error of a 2-layer network on a fixed batch, checked
/// against its parameters.
pub fn mlp_mse_check(seed: u64) -> (f64, usize) {
    let rng = &mut seeded(seed);
    let mut mlp = Mlp::<f64>::new("m", 3, &[5], 2, rng);
    let x = uniform(rng, &[6, 3], -2.0, 2.0);
    let y = uniform(rng, &[6, 2], -2.0, 2.0);
    param_gradcheck(&mut mlp, 1000, seed, |m, g| {
        let xi = g.constant(x.clone());
        let yi = g.constant(y.clone());
        let p = m.forward(g, xi);
        let d = g.sub(p, yi);
        let sq = g.square(d);
        g.mean(sq)
    })
}

/// Full pre-training loss of a small backbone against sampled parameters.
pub fn backbone_loss_check(seed: u64, per_tensor: usize) -> (f64, usize) {
    let cfg = BackboneConfig {
        context_length: 4,
        num_features: 3,
        horizon: 2,
        model_dim: 8,
        num_heads: 2,
        num_layers: 2,
        ff_dim: 16,
        dropout: 0.0,
    };
    let mut b = Backbone::new(cfg, seed);
    let rng = &mut seeded(derive_seed(seed, 1));
    let states: Vec<Vec<f64>> = (0..3).map(|_| uniform(rng, &[12], -2.0, 2.0).into_data()).collect();
    let targets = uniform(rng, &[3, 2], -2.0, 2.0);
    param_gradcheck(&mut b, per_tensor, seed, |m, g| {
        let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let p = m.predict_batch(g, &refs);
        let t = g.constant(targets.clone());
        let d = g.sub(p, t);
        let sq = g.square(d);
        g.mean(sq)
    })
}
