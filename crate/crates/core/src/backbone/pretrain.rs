use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Backbone, BackboneError};
use crate::data::WindowedDataset;
use crate::nn::{collect_grads, Adam, AdamConfig};
use crate::numerics::{Graph, Parameterized, Scalar, Tensor};
use crate::rng::{derive_seed, seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl PretrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

const EVAL_CHUNK: usize = 256;

impl<S: Scalar> Backbone<S> {
    fn check_dataset(&self, ds: &WindowedDataset) -> Result<(), BackboneError> {
        let c = &self.config;
        if ds.context_length != c.context_length
            || ds.num_features != c.num_features
            || ds.horizon != c.horizon
        {
            return Err(BackboneError::DatasetMismatch(format!(
                "dataset (T, N, P) = ({}, {}, {}) vs model ({}, {}, {})",
                ds.context_length,
                ds.num_features,
                ds.horizon,
                c.context_length,
                c.num_features,
                c.horizon
            )));
        }
        Ok(())
    }

    /// Forecasts for every window, evaluation mode.
    pub fn predict_dataset(&self, ds: &WindowedDataset) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(ds.len());
        let idx: Vec<usize> = (0..ds.len()).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let states: Vec<&[f64]> = chunk.iter().map(|&i| ds.state(i)).collect();
            let mut g = Graph::new();
            let y = self.predict_batch(&mut g, &states);
            let p = self.config.horizon;
            for row in g.value(y).data().chunks(p) {
                out.push(row.iter().map(|v| v.as_f64()).collect());
            }
        }
        out
    }

    /// Mean squared forecast error over all windows and horizon steps.
    pub fn mse(&self, ds: &WindowedDataset) -> f64 {
        assert!(!ds.is_empty(), "contract violation: mse of an empty dataset");
        let preds = self.predict_dataset(ds);
        let mut sum = 0.0;
        for (i, p) in preds.iter().enumerate() {
            for (a, b) in p.iter().zip(ds.target(i)) {
                sum += (a - b) * (a - b);
            }
        }
        sum / (ds.len() * ds.horizon) as f64
    }

    /// Minibatch Adam on forecast MSE. Each history record holds the
    /// evaluation-mode MSE after that epoch.
    ///
    /// A non-finite loss restores the parameters from the start of the
    /// failing epoch and returns [`BackboneError::NonFiniteLoss`].
    pub fn pretrain(
        &mut self,
        train: &WindowedDataset,
        val: Option<&WindowedDataset>,
        cfg: &PretrainConfig,
    ) -> Result<PretrainHistory, BackboneError> {
        if train.is_empty() {
            return Err(BackboneError::EmptyDataset);
        }
        self.check_dataset(train)?;
        if let Some(v) = val {
            self.check_dataset(v)?;
            if v.is_empty() {
                return Err(BackboneError::EmptyDataset);
            }
        }
        if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
            return Err(BackboneError::InvalidSetting(format!(
                "learning rate {}",
                cfg.learning_rate
            )));
        }
        if cfg.batch_size == 0 {
            return Err(BackboneError::InvalidSetting("batch size 0".into()));
        }
        let mut shuffle_rng = seeded(derive_seed(cfg.seed, stream::SHUFFLE));
        let mut dropout_rng = seeded(derive_seed(cfg.seed, stream::DROPOUT));
        let mut adam = Adam::<S>::new(AdamConfig::with_lr(cfg.learning_rate));
        let mut history = PretrainHistory::default();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let p = self.config.horizon;
        for epoch in 0..cfg.epochs {
            let snapshot = self.snapshot();
            order.shuffle(&mut shuffle_rng);
            for batch in order.chunks(cfg.batch_size) {
                let states: Vec<&[f64]> = batch.iter().map(|&i| train.state(i)).collect();
                let mut targets = Vec::with_capacity(batch.len() * p);
                for &i in batch {
                    targets.extend(train.target(i).iter().map(|&v| S::of(v)));
                }
                let mut g = Graph::new();
                let z = self.latent_batch_with(&mut g, &states, Some(&mut dropout_rng));
                let y = self.head_node(&mut g, z);
                let t = g.constant(Tensor::new(vec![batch.len(), p], targets).expect("finite targets"));
                let diff = g.sub(y, t);
                let sq = g.square(diff);
                let loss = g.mean(sq);
                if !g.value(loss).item().is_finite() || g.first_non_finite().is_some() {
                    self.restore(&snapshot);
                    return Err(BackboneError::NonFiniteLoss { epoch, history });
                }
                let grads = g.backward(loss);
                let gl = collect_grads(&g, &grads, &self.params());
                adam.step(&mut self.params_mut(), &gl);
            }
            let train_mse = self.mse(train);
            if !train_mse.is_finite() {
                self.restore(&snapshot);
                return Err(BackboneError::NonFiniteLoss { epoch, history });
            }
            history.epochs.push(EpochRecord {
                epoch: epoch + 1,
                train_mse,
                val_mse: val.map(|v| self.mse(v)),
            });
        }
        Ok(history)
    }
}
