use rand::Rng as _;

use crate::numerics::{Graph, NodeId, Param, Parameterized, Scalar, Tensor};
use crate::rng::Rng;

/// Tensor with entries uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init<S: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Tensor<S> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(shape, data).expect("finite initialization")
}

/// Affine map `x · W + b` over rows of a `[batch, in]` input.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub weight: Param<S>,
    pub bias: Param<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_init(vec![input, output], input, rng),
            ),
            bias: Param::new(
                format!("{name}.bias"),
                uniform_init(vec![1, output], input, rng),
            ),
        }
    }

    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(vec![input, output])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![1, output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, g: &mut Graph<S>, x: NodeId) -> NodeId {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        let xw = g.matmul(x, w);
        g.add(xw, b)
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.weight.frozen = frozen;
        self.bias.frozen = frozen;
    }
}

impl<S: Scalar> Parameterized<S> for Linear<S> {
    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Tanh multilayer perceptron with a linear output layer.
#[derive(Debug, Clone)]
pub struct Mlp<S> {
    pub layers: Vec<Linear<S>>,
}

impl<S: Scalar> Mlp<S> {
    pub fn new(name: &str, input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    /// Same as [`Mlp::new`] but with the output layer zeroed, so the initial
    /// output is exactly zero for every input.
    pub fn with_zero_output(
        name: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut mlp = Self::new(name, input, hidden, output, rng);
        let last = mlp.layers.len() - 1;
        let (i, o) = (mlp.layers[last].input_dim(), mlp.layers[last].output_dim());
        mlp.layers[last] = Linear::zeros(&format!("{name}.{last}"), i, o);
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn forward(&self, g: &mut Graph<S>, x: NodeId) -> NodeId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h);
            if i < last {
                h = g.tanh(h);
            }
        }
        h
    }
}

impl<S: Scalar> Parameterized<S> for Mlp<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// State-value critic: two tanh hidden layers and a scalar output.
#[derive(Debug, Clone)]
pub struct ValueNet<S> {
    pub mlp: Mlp<S>,
}

impl<S: Scalar> ValueNet<S> {
    pub const DEFAULT_HIDDEN: usize = 256;

    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            mlp: Mlp::new("critic", input, &[hidden, hidden], 1, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// `[batch, input]` to `[batch, 1]`.
    pub fn forward(&self, g: &mut Graph<S>, x: NodeId) -> NodeId {
        self.mlp.forward(g, x)
    }
}

impl<S: Scalar> Parameterized<S> for ValueNet<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.mlp.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.mlp.params_mut()
    }
}
