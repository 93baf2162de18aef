//! Environments: the forecasting environment and two small continuous
//! control tasks.

mod control;
mod forecast;

use std::ops::Range;

pub use control::{ControlConfig, ControlEnv, ControlVariant};
pub use forecast::{forecast_reward, ForecastEnv, Penalty, Traversal};

/// Row-major `[rows, cols]` observation plus optional side information.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Extra values outside the window, e.g. the revealed truth for oracle
    /// experiments. Empty unless an environment opts in.
    pub context: Vec<f64>,
}

impl Observation {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "contract violation: observation data length {} vs shape ({rows}, {cols})",
            data.len()
        );
        Self {
            rows,
            cols,
            data,
            context: Vec::new(),
        }
    }

    /// Columns `[start, end)` of every row.
    pub fn slice_cols(&self, start: usize, end: usize) -> Observation {
        assert!(
            start < end && end <= self.cols,
            "contract violation: column slice {start}..{end} of {} columns",
            self.cols
        );
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in 0..self.rows {
            data.extend_from_slice(&self.data[r * self.cols + start..r * self.cols + end]);
        }
        Observation {
            rows: self.rows,
            cols: end - start,
            data,
            context: self.context.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Next observation; on the final step of an episode, the last one.
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Revealed target for forecasting, empty for control tasks.
    pub info: Vec<f64>,
}

pub trait Environment {
    /// `(rows, cols)` of every observation.
    fn observation_shape(&self) -> (usize, usize);
    fn action_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Observation;
    /// Panics when called after `done` without a reset.
    fn step(&mut self, action: &[f64]) -> StepResult;
    fn is_done(&self) -> bool;
    /// Reward `action` would earn from the current state, without
    /// advancing it.
    fn score(&self, action: &[f64]) -> f64;
}

/// Shows the wrapped environment's observations restricted to a column
/// range; rewards and dynamics are unchanged.
#[derive(Debug, Clone)]
pub struct SlicedEnv<E> {
    pub inner: E,
    columns: Range<usize>,
}

impl<E: Environment> SlicedEnv<E> {
    pub fn new(inner: E, columns: Range<usize>) -> Self {
        let (_, cols) = inner.observation_shape();
        assert!(
            columns.start < columns.end && columns.end <= cols,
            "contract violation: column range {columns:?} for {cols} columns"
        );
        Self { inner, columns }
    }

    pub fn columns(&self) -> Range<usize> {
        self.columns.clone()
    }

    fn slice(&self, obs: Observation) -> Observation {
        obs.slice_cols(self.columns.start, self.columns.end)
    }
}

impl<E: Environment> Environment for SlicedEnv<E> {
    fn observation_shape(&self) -> (usize, usize) {
        (self.inner.observation_shape().0, self.columns.len())
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let obs = self.inner.reset(seed);
        self.slice(obs)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let mut r = self.inner.step(action);
        r.observation = self.slice(r.observation);
        r
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn score(&self, action: &[f64]) -> f64 {
        self.inner.score(action)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn observation_shape(&self) -> (usize, usize) {
        (**self).observation_shape()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn reset(&mut self, seed: u64) -> Observation {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> StepResult {
        (**self).step(action)
    }
    fn is_done(&self) -> bool {
        (**self).is_done()
    }
    fn score(&self, action: &[f64]) -> f64 {
        (**self).score(action)
    }
}
