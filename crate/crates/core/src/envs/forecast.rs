use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Environment, Observation, StepResult};
use crate::data::WindowedDataset;
use crate::rng::seeded;

/// `2·exp(−MSE(a, y)) − 1`, in `(−1, 1]`.
pub fn forecast_reward(action: &[f64], target: &[f64]) -> f64 {
    assert_eq!(
        action.len(),
        target.len(),
        "contract violation: action length {} vs target length {}",
        action.len(),
        target.len()
    );
    let mse = action
        .iter()
        .zip(target)
        .map(|(a, y)| (a - y) * (a - y))
        .sum::<f64>()
        / action.len() as f64;
    2.0 * (-mse).exp() - 1.0
}

/// Extra cost `ψ(a)` subtracted from the forecast reward.
pub type Penalty = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traversal {
    Sequential,
    Shuffled,
}

/// Each step is one window: the agent sees the state and is paid for its
/// forecast of the next `P` target values.
#[derive(Clone)]
pub struct ForecastEnv {
    dataset: WindowedDataset,
    traversal: Traversal,
    episode_length: usize,
    penalty: Option<Penalty>,
    truth_context: bool,
    order: Vec<usize>,
    pos: usize,
    steps: usize,
    done: bool,
}

impl fmt::Debug for ForecastEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForecastEnv")
            .field("windows", &self.dataset.len())
            .field("traversal", &self.traversal)
            .field("episode_length", &self.episode_length)
            .field("penalty", &self.penalty.is_some())
            .field("pos", &self.pos)
            .field("steps", &self.steps)
            .field("done", &self.done)
            .finish()
    }
}

impl ForecastEnv {
    pub const DEFAULT_EPISODE_LENGTH: usize = 128;

    pub fn new(dataset: WindowedDataset, traversal: Traversal) -> Self {
        assert!(!dataset.is_empty(), "contract violation: forecasting env over an empty dataset");
        Self {
            dataset,
            traversal,
            episode_length: Self::DEFAULT_EPISODE_LENGTH,
            penalty: None,
            truth_context: false,
            order: Vec::new(),
            pos: 0,
            steps: 0,
            done: true,
        }
    }

    pub fn with_episode_length(mut self, episode_length: usize) -> Self {
        assert!(episode_length >= 1, "contract violation: episode length must be >= 1");
        self.episode_length = episode_length;
        self
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = Some(penalty);
        self
    }

    /// Puts the window's target into [`Observation::context`].
    pub fn with_truth_context(mut self) -> Self {
        self.truth_context = true;
        self
    }

    pub fn dataset(&self) -> &WindowedDataset {
        &self.dataset
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    /// Dataset index of the window currently observed.
    pub fn cursor(&self) -> usize {
        self.order[self.pos]
    }

    pub fn truth(&self) -> &[f64] {
        self.dataset.target(self.cursor())
    }

    /// Starts an episode at position `start` of the traversal order instead
    /// of its beginning.
    pub fn reset_at(&mut self, seed: u64, start: usize) -> Observation {
        let n = self.dataset.len();
        assert!(start < n, "contract violation: start {start} beyond {n} windows");
        self.order = (0..n).collect();
        if self.traversal == Traversal::Shuffled {
            self.order.shuffle(&mut seeded(seed));
        }
        self.pos = start;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn observe(&self) -> Observation {
        let i = self.cursor();
        let state = self.dataset.state(i);
        let (t, n) = (self.dataset.context_length, self.dataset.num_features);
        let mut obs = Observation::new(t, n, state.to_vec());
        if self.truth_context {
            obs.context = self.dataset.target(i).to_vec();
        }
        obs
    }
}

impl Environment for ForecastEnv {
    fn observation_shape(&self) -> (usize, usize) {
        (self.dataset.context_length, self.dataset.num_features)
    }

    fn action_dim(&self) -> usize {
        self.dataset.horizon
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.reset_at(seed, 0)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(!self.done, "contract violation: step after done; call reset first");
        let reward = self.score(action);
        let info = self.truth().to_vec();
        self.steps += 1;
        self.done = self.steps >= self.episode_length || self.pos + 1 >= self.order.len();
        if !self.done {
            self.pos += 1;
        }
        StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            info,
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn score(&self, action: &[f64]) -> f64 {
        let y = self.truth();
        let r = forecast_reward(action, y);
        match &self.penalty {
            Some(psi) => r - psi(action),
            None => r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::SlicedEnv;
    use crate::data::{make_windows, SeriesFrame};
    use chrono::{Days, NaiveDate};

    fn dataset(len: usize) -> WindowedDataset {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let ts = (0..len).map(|i| start + Days::new(i as u64)).collect();
        let y: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let z: Vec<f64> = (0..len).map(|i| -(i as f64)).collect();
        let frame = SeriesFrame::new(ts, vec![("y".into(), y), ("z".into(), z)]).unwrap();
        make_windows(&frame, 3, 1, 1).unwrap()
    }

    #[test]
    fn reward_examples() {
        assert_eq!(forecast_reward(&[0.3, -2.0], &[0.3, -2.0]), 1.0);
        assert!((forecast_reward(&[1.0], &[0.0]) - (-0.264241)).abs() < 1e-6);
        assert!((forecast_reward(&[1.0, -1.0], &[0.0, 0.0]) - (-0.264241)).abs() < 1e-6);
        let ln2 = 2f64.ln().sqrt();
        assert!(forecast_reward(&[ln2], &[0.0]).abs() < 1e-15);
        assert!(forecast_reward(&[30f64.sqrt()], &[0.0]) > -1.0);
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn reward_length_mismatch_panics() {
        forecast_reward(&[1.0], &[1.0, 2.0]);
    }

    #[test]
    fn sequential_episode_accounting() {
        let ds = dataset(20);
        let mut env = ForecastEnv::new(ds.clone(), Traversal::Sequential).with_episode_length(5);
        let obs = env.reset(0);
        assert_eq!(obs.data, ds.state(0));
        let mut steps = 0;
        loop {
            let y = env.truth().to_vec();
            let r = env.step(&y);
            assert_eq!(r.reward, 1.0);
            assert_eq!(r.info, y);
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 5);
        // 17 windows; starting at 14 leaves 3.
        env.reset_at(0, 14);
        let mut steps = 0;
        while !env.step(&[0.0]).done {
            steps += 1;
        }
        assert_eq!(steps + 1, 3);
    }

    #[test]
    #[should_panic(expected = "step after done")]
    fn step_after_done_panics() {
        let mut env = ForecastEnv::new(dataset(5), Traversal::Sequential).with_episode_length(1);
        env.reset(0);
        env.step(&[0.0]);
        env.step(&[0.0]);
    }

    #[test]
    fn shuffled_reset_is_seeded() {
        let mut env = ForecastEnv::new(dataset(200), Traversal::Shuffled);
        let a = env.reset(1);
        let b = env.reset(1);
        assert_eq!(a, b);
        let firsts: std::collections::HashSet<usize> = (0..20)
            .map(|s| {
                env.reset(s);
                env.cursor()
            })
            .collect();
        assert!(firsts.len() > 10);
    }

    #[test]
    fn penalty_and_column_slices() {
        let psi: Penalty = Arc::new(|a: &[f64]| 0.1 * a[0].abs());
        let env = ForecastEnv::new(dataset(10), Traversal::Sequential)
            .with_penalty(psi)
            .with_truth_context();
        let mut env = SlicedEnv::new(env, 1..2);
        let obs = env.reset(0);
        assert_eq!((obs.rows, obs.cols), (3, 1));
        assert_eq!(obs.data, vec![0.0, -1.0, -2.0]);
        assert_eq!(obs.context, vec![3.0]);
        assert!((env.step(&[3.0]).reward - 0.7).abs() < 1e-12);
    }
}
