//! Transformer-encoder forecaster with freezable layers.

mod checkpoint;
mod pretrain;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Linear;
use crate::numerics::{Graph, NodeId, Param, Parameterized, Scalar, Tensor};
use crate::rng::{derive_seed, seeded, stream, Rng};

pub use checkpoint::{read_checkpoint_meta, CheckpointMeta, MAGIC};
pub use pretrain::{EpochRecord, PretrainConfig, PretrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub context_length: usize,
    pub num_features: usize,
    pub horizon: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    /// Zero gives the projection-only ablation.
    pub num_layers: usize,
    pub ff_dim: usize,
    pub dropout: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            context_length: 32,
            num_features: 8,
            horizon: 4,
            model_dim: 64,
            num_heads: 4,
            num_layers: 4,
            ff_dim: 128,
            dropout: 0.0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<(), BackboneError> {
        let bad = |m: String| Err(BackboneError::InvalidConfig(m));
        if self.context_length == 0 || self.num_features == 0 || self.horizon == 0 {
            return bad("context_length, num_features and horizon must be >= 1".into());
        }
        if self.model_dim == 0 || self.num_heads == 0 || self.ff_dim == 0 {
            return bad("model_dim, num_heads and ff_dim must be >= 1".into());
        }
        if self.model_dim % self.num_heads != 0 {
            return bad(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Field-by-field differences, empty when equal.
    pub fn differences(&self, other: &BackboneConfig) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != other.$f {
                    out.push(format!("{} {} vs {}", stringify!($f), self.$f, other.$f));
                }
            )*};
        }
        cmp!(context_length, num_features, horizon, model_dim, num_heads, num_layers, ff_dim, dropout);
        out
    }
}

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("invalid backbone config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("corrupt checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("dataset shape mismatch: {0}")]
    DatasetMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid pretraining setting: {0}")]
    InvalidSetting(String),
    #[error("non-finite loss in epoch {epoch}; parameters restored to the start of that epoch")]
    NonFiniteLoss {
        epoch: usize,
        history: PretrainHistory,
    },
}

#[derive(Debug, Clone)]
pub struct EncoderLayer<S> {
    pub norm1_gain: Param<S>,
    pub norm1_bias: Param<S>,
    pub query: Linear<S>,
    pub key: Linear<S>,
    pub value: Linear<S>,
    pub output: Linear<S>,
    pub norm2_gain: Param<S>,
    pub norm2_bias: Param<S>,
    pub ff1: Linear<S>,
    pub ff2: Linear<S>,
}

impl<S: Scalar> EncoderLayer<S> {
    fn new(name: &str, d: usize, ff: usize, rng: &mut Rng) -> Self {
        Self {
            norm1_gain: Param::new(format!("{name}.norm1.gain"), Tensor::ones(vec![1, d])),
            norm1_bias: Param::new(format!("{name}.norm1.bias"), Tensor::zeros(vec![1, d])),
            query: Linear::new(&format!("{name}.attn.query"), d, d, rng),
            key: Linear::new(&format!("{name}.attn.key"), d, d, rng),
            value: Linear::new(&format!("{name}.attn.value"), d, d, rng),
            output: Linear::new(&format!("{name}.attn.output"), d, d, rng),
            norm2_gain: Param::new(format!("{name}.norm2.gain"), Tensor::ones(vec![1, d])),
            norm2_bias: Param::new(format!("{name}.norm2.bias"), Tensor::zeros(vec![1, d])),
            ff1: Linear::new(&format!("{name}.ff1"), d, ff, rng),
            ff2: Linear::new(&format!("{name}.ff2"), ff, d, rng),
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
    }
}

impl<S: Scalar> Parameterized<S> for EncoderLayer<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut v = vec![&self.norm1_gain, &self.norm1_bias];
        for l in [&self.query, &self.key, &self.value, &self.output] {
            v.extend(l.params());
        }
        v.push(&self.norm2_gain);
        v.push(&self.norm2_bias);
        v.extend(self.ff1.params());
        v.extend(self.ff2.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut v = vec![&mut self.norm1_gain, &mut self.norm1_bias];
        v.extend(self.query.params_mut());
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.output.params_mut());
        v.push(&mut self.norm2_gain);
        v.push(&mut self.norm2_bias);
        v.extend(self.ff1.params_mut());
        v.extend(self.ff2.params_mut());
        v
    }
}

const NORM_EPS: f64 = 1e-5;

/// Pre-norm transformer encoder over a `[T, N]` window. The latent is the
/// mean over time of the final hidden states; the head maps it to a
/// `P`-step forecast.
#[derive(Debug, Clone)]
pub struct Backbone<S> {
    config: BackboneConfig,
    pub input: Linear<S>,
    pub positional: Param<S>,
    pub layers: Vec<EncoderLayer<S>>,
    pub head: Linear<S>,
    frozen_layers: usize,
}

fn sinusoidal<S: Scalar>(t: usize, d: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(t * d);
    for pos in 0..t {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data.push(S::of(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::matrix(t, d, data)
}

impl<S: Scalar> Backbone<S> {
    /// Panics on an invalid config; use [`BackboneConfig::validate`] first
    /// for a recoverable error.
    pub fn new(config: BackboneConfig, seed: u64) -> Self {
        if let Err(e) = config.validate() {
            panic!("contract violation: {e}");
        }
        let mut rng = seeded(derive_seed(seed, stream::INIT));
        let d = config.model_dim;
        let input = Linear::new("input", config.num_features, d, &mut rng);
        let positional = Param::new("positional", sinusoidal(config.context_length, d));
        let layers = (0..config.num_layers)
            .map(|i| EncoderLayer::new(&format!("layer{i}"), d, config.ff_dim, &mut rng))
            .collect();
        let head = Linear::new("head", d, config.horizon, &mut rng);
        Self {
            config,
            input,
            positional,
            layers,
            head,
            frozen_layers: 0,
        }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Zeroes the input projection so the latent depends only on the
    /// positional encoding.
    pub fn zero_input_projection(&mut self) {
        for p in self.input.params_mut() {
            p.value = Tensor::zeros(p.value.shape().to_vec());
        }
    }

    fn check_state(&self, s: &[f64]) {
        let c = &self.config;
        assert!(
            s.len() == c.context_length * c.num_features,
            "contract violation: state has {} values, expected (T, N) = ({}, {})",
            s.len(),
            c.context_length,
            c.num_features
        );
    }

    fn state_node(&self, g: &mut Graph<S>, s: &[f64]) -> NodeId {
        self.check_state(s);
        let c = &self.config;
        let data = s.iter().map(|&v| S::of(v)).collect();
        let t = Tensor::new(vec![c.context_length, c.num_features], data)
            .unwrap_or_else(|e| panic!("contract violation: state {e}"));
        g.constant(t)
    }

    fn layer_norm(g: &mut Graph<S>, x: NodeId, gain: &Param<S>, bias: &Param<S>) -> NodeId {
        let n = g.layer_norm(x, 1, S::of(NORM_EPS));
        let gn = g.param(gain);
        let bn = g.param(bias);
        let y = g.mul(n, gn);
        g.add(y, bn)
    }

    fn dropout(&self, g: &mut Graph<S>, x: NodeId, rng: Option<&mut Rng>) -> NodeId {
        let p = self.config.dropout;
        let Some(rng) = rng else { return x };
        if p == 0.0 {
            return x;
        }
        let keep = S::of(1.0 / (1.0 - p));
        let shape = g.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < p { S::zero() } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask).expect("finite mask"));
        g.mul(x, m)
    }

    fn attention(&self, g: &mut Graph<S>, layer: &EncoderLayer<S>, x: NodeId) -> NodeId {
        let h = self.config.num_heads;
        let dh = self.config.model_dim / h;
        let q = layer.query.forward(g, x);
        let k = layer.key.forward(g, x);
        let v = layer.value.forward(g, x);
        let scale = S::of(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(h);
        for i in 0..h {
            let (a, b) = (i * dh, (i + 1) * dh);
            let qh = g.slice_cols(q, a, b);
            let kh = g.slice_cols(k, a, b);
            let vh = g.slice_cols(v, a, b);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let w = g.softmax(scores, 1);
            heads.push(g.matmul(w, vh));
        }
        let cat = if h == 1 { heads[0] } else { g.concat_cols(&heads) };
        layer.output.forward(g, cat)
    }

    /// Final hidden states `[T, d]` for one state window.
    fn encode(&self, g: &mut Graph<S>, s: &[f64], mut rng: Option<&mut Rng>) -> NodeId {
        let x = self.state_node(g, s);
        let mut h = self.input.forward(g, x);
        let pe = g.param(&self.positional);
        h = g.add(h, pe);
        for layer in &self.layers {
            let n1 = Self::layer_norm(g, h, &layer.norm1_gain, &layer.norm1_bias);
            let a = self.attention(g, layer, n1);
            let a = self.dropout(g, a, rng.as_deref_mut());
            h = g.add(h, a);
            let n2 = Self::layer_norm(g, h, &layer.norm2_gain, &layer.norm2_bias);
            let f = layer.ff1.forward(g, n2);
            let f = g.tanh(f);
            let f = layer.ff2.forward(g, f);
            let f = self.dropout(g, f, rng.as_deref_mut());
            h = g.add(h, f);
        }
        h
    }

    /// `[1, model_dim]` latent node for one state window.
    pub fn latent_node(&self, g: &mut Graph<S>, s: &[f64]) -> NodeId {
        let h = self.encode(g, s, None);
        g.mean_axis(h, 0)
    }

    /// `[B, model_dim]` latents, one row per state. Each row is computed
    /// exactly as [`Backbone::latent_node`] would.
    pub fn latent_batch(&self, g: &mut Graph<S>, states: &[&[f64]]) -> NodeId {
        self.latent_batch_with(g, states, None)
    }

    pub(crate) fn latent_batch_with(
        &self,
        g: &mut Graph<S>,
        states: &[&[f64]],
        mut rng: Option<&mut Rng>,
    ) -> NodeId {
        assert!(!states.is_empty(), "contract violation: empty batch");
        let rows: Vec<NodeId> = states
            .iter()
            .map(|s| {
                let h = self.encode(g, s, rng.as_deref_mut());
                g.mean_axis(h, 0)
            })
            .collect();
        if rows.len() == 1 {
            rows[0]
        } else {
            g.concat_rows(&rows)
        }
    }

    /// Head applied to `[B, model_dim]` latents.
    pub fn head_node(&self, g: &mut Graph<S>, latent: NodeId) -> NodeId {
        self.head.forward(g, latent)
    }

    /// `[B, P]` forecasts.
    pub fn predict_batch(&self, g: &mut Graph<S>, states: &[&[f64]]) -> NodeId {
        let z = self.latent_batch(g, states);
        self.head_node(g, z)
    }

    pub fn forward_latent(&self, s: &[f64]) -> Vec<S> {
        let mut g = Graph::new();
        let z = self.latent_node(&mut g, s);
        g.value(z).data().to_vec()
    }

    pub fn forward_predict(&self, s: &[f64]) -> Vec<S> {
        let mut g = Graph::new();
        let z = self.latent_node(&mut g, s);
        let y = self.head_node(&mut g, z);
        g.value(y).data().to_vec()
    }

    /// The projection head on its own.
    pub fn project(&self, latent: &[S]) -> Vec<S> {
        assert_eq!(
            latent.len(),
            self.config.model_dim,
            "contract violation: latent length {} vs model_dim {}",
            latent.len(),
            self.config.model_dim
        );
        let mut g = Graph::new();
        let z = g.constant(Tensor::new(vec![1, latent.len()], latent.to_vec()).expect("finite latent"));
        let y = self.head_node(&mut g, z);
        g.value(y).data().to_vec()
    }

    /// Freezes the first `⌊f·num_layers⌋` encoder layers and, when `f > 0`,
    /// the input projection and positional encoding. Everything else,
    /// including the head, is unfrozen. Returns the frozen layer count.
    pub fn set_frozen_fraction(&mut self, f: f64) -> usize {
        assert!(
            (0.0..=1.0).contains(&f),
            "contract violation: frozen fraction {f} outside [0, 1]"
        );
        let count = ((f * self.layers.len() as f64) + 1e-9).floor() as usize;
        let count = count.min(self.layers.len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.set_frozen(i < count);
        }
        self.input.set_frozen(f > 0.0);
        self.positional.frozen = f > 0.0;
        self.head.set_frozen(false);
        self.frozen_layers = count;
        count
    }

    /// Freezes or unfreezes every parameter, head included.
    pub fn freeze_all(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
        self.frozen_layers = if frozen { self.layers.len() } else { 0 };
    }

    pub fn frozen_layers(&self) -> usize {
        self.frozen_layers
    }

    /// Parameters of the encoder without the head.
    pub fn encoder_params(&self) -> Vec<&Param<S>> {
        let mut v = self.input.params();
        v.push(&self.positional);
        for l in &self.layers {
            v.extend(l.params());
        }
        v
    }
}

impl<S: Scalar> Parameterized<S> for Backbone<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut v = self.encoder_params();
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut v = self.input.params_mut();
        v.push(&mut self.positional);
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }
}
