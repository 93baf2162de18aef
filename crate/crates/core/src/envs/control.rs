use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Environment, Observation, StepResult};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlVariant {
    /// Point mass on a line, one thrust action.
    LineRacer,
    /// Cart with an inverted stick, thrust and torque actions.
    StickBalance,
}

impl std::str::FromStr for ControlVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line-racer" => Ok(Self::LineRacer),
            "stick-balance" => Ok(Self::StickBalance),
            other => Err(format!("unknown environment {other:?} (expected line-racer or stick-balance)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub variant: ControlVariant,
    pub w_forward: f64,
    pub w_healthy: f64,
    pub w_ctrl: f64,
    pub step_limit: usize,
    pub dt: f64,
    /// Largest healthy `|angle|` for stick-balance.
    pub healthy_angle: f64,
}

impl ControlConfig {
    pub fn line_racer() -> Self {
        Self {
            variant: ControlVariant::LineRacer,
            w_forward: 1.0,
            w_healthy: 0.0,
            w_ctrl: 0.1,
            step_limit: 200,
            dt: 0.05,
            healthy_angle: f64::INFINITY,
        }
    }

    pub fn stick_balance() -> Self {
        Self {
            variant: ControlVariant::StickBalance,
            w_forward: 1.0,
            w_healthy: 1.0,
            w_ctrl: 1e-3,
            step_limit: 200,
            dt: 0.05,
            healthy_angle: 0.4,
        }
    }

    pub fn for_variant(variant: ControlVariant) -> Self {
        match variant {
            ControlVariant::LineRacer => Self::line_racer(),
            ControlVariant::StickBalance => Self::stick_balance(),
        }
    }
}

const THRUST: f64 = 5.0;
const DRAG: f64 = 0.5;
const GRAVITY: f64 = 9.8;
const STICK_LENGTH: f64 = 1.0;
const TORQUE_GAIN: f64 = 10.0;
const INIT_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct State {
    x: f64,
    v: f64,
    theta: f64,
    omega: f64,
}

/// Explicit-Euler toy dynamics with rewards
/// `w_f·Δx + w_h·H − w_ctrl·|a|²`.
#[derive(Debug, Clone)]
pub struct ControlEnv {
    config: ControlConfig,
    state: State,
    steps: usize,
    done: bool,
}

impl ControlEnv {
    pub fn new(config: ControlConfig) -> Self {
        Self {
            config,
            state: State::default(),
            steps: 0,
            done: true,
        }
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn position(&self) -> f64 {
        self.state.x
    }

    pub fn angle(&self) -> f64 {
        self.state.theta
    }

    /// Overrides the stick angle; for tests of the termination rule.
    pub fn force_angle(&mut self, theta: f64) {
        self.state.theta = theta;
    }

    fn observe(&self) -> Observation {
        let s = &self.state;
        match self.config.variant {
            ControlVariant::LineRacer => Observation::new(1, 1, vec![s.v]),
            ControlVariant::StickBalance => Observation::new(1, 3, vec![s.v, s.theta, s.omega]),
        }
    }

    fn healthy(&self, s: &State) -> bool {
        s.theta.abs() < self.config.healthy_angle
    }

    /// Next state and reward; no mutation.
    fn transition(&self, action: &[f64]) -> (State, f64, bool) {
        assert_eq!(
            action.len(),
            self.action_dim(),
            "contract violation: action length {} vs {}",
            action.len(),
            self.action_dim()
        );
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let c = &self.config;
        let dt = c.dt;
        let s = self.state;
        let accel = THRUST * a[0] - DRAG * s.v;
        let mut next = State {
            x: s.x + dt * s.v,
            v: s.v + dt * accel,
            ..s
        };
        let ctrl: f64 = a.iter().map(|v| v * v).sum();
        let forward = next.x - s.x;
        match c.variant {
            ControlVariant::LineRacer => (next, c.w_forward * forward - c.w_ctrl * ctrl, false),
            ControlVariant::StickBalance => {
                let alpha = (GRAVITY / STICK_LENGTH) * s.theta.sin()
                    - (accel / STICK_LENGTH) * s.theta.cos()
                    + TORQUE_GAIN * a[1];
                next.theta = s.theta + dt * s.omega;
                next.omega = s.omega + dt * alpha;
                let healthy = self.healthy(&next);
                let h = if healthy { 1.0 } else { 0.0 };
                let reward = c.w_forward * forward + c.w_healthy * h - c.w_ctrl * ctrl;
                (next, reward, !healthy)
            }
        }
    }
}

impl Environment for ControlEnv {
    fn observation_shape(&self) -> (usize, usize) {
        match self.config.variant {
            ControlVariant::LineRacer => (1, 1),
            ControlVariant::StickBalance => (1, 3),
        }
    }

    fn action_dim(&self) -> usize {
        match self.config.variant {
            ControlVariant::LineRacer => 1,
            ControlVariant::StickBalance => 2,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.state = State::default();
        if self.config.variant == ControlVariant::StickBalance {
            let mut rng = seeded(seed);
            self.state.theta = rng.random_range(-INIT_SPREAD..=INIT_SPREAD);
            self.state.omega = rng.random_range(-INIT_SPREAD..=INIT_SPREAD);
        }
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(!self.done, "contract violation: step after done; call reset first");
        let (next, reward, terminal) = self.transition(action);
        self.state = next;
        self.steps += 1;
        self.done = terminal || self.steps >= self.config.step_limit;
        StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            info: Vec::new(),
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn score(&self, action: &[f64]) -> f64 {
        self.transition(action).1
    }
}
