//! Environments the trainer can drive: the residual swimmer task and a
//! one-dimensional point mass used as a smoke test.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::env::{baseline_policy, env_reset, env_step_with, Action, EnvConfig, EnvState, Transition};
use crate::error::{Error, Result};
use crate::rl::policy::{compose_action, initial_log_std};
use crate::swimmer::SwimmerModel;

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Clone {
    /// Everything needed to continue an interrupted episode.
    type State: Serialize + DeserializeOwned + Clone;

    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Initial exploration `log std`.
    fn initial_log_std(&self) -> f64;
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<()>;
    fn observation(&self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Feedback>;
    fn state(&self) -> Self::State;
    fn set_state(&mut self, state: Self::State);
}

/// How the learned residual is combined with the geometric baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BgpsConfig {
    /// Per-component bound on the residual joint rate (rad/s).
    pub action_range: f64,
    /// Add the baseline gait; when false the residual is the whole action.
    pub use_baseline: bool,
}

impl Default for BgpsConfig {
    fn default() -> Self {
        Self { action_range: 0.15, use_baseline: true }
    }
}

impl BgpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.action_range >= 0.0) || !self.action_range.is_finite() {
            return Err(Error::InvalidParameter("action_range must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn base_action(&self, state: &EnvState) -> Action {
        if self.use_baseline {
            baseline_policy(state)
        } else {
            Action::ZERO
        }
    }

    /// Executed action before the environment's speed clamp.
    pub fn compose(&self, state: &EnvState, residual: &[f64]) -> Action {
        let base = self.base_action(state);
        let a = compose_action(base, residual, self.action_range);
        let d = self.action_range;
        let within = |u: f64, b: f64| (u - b).abs() <= d + 4.0 * f64::EPSILON * (b.abs() + d);
        assert!(within(a.adot1, base.adot1) && within(a.adot2, base.adot2), "executed action left the residual band");
        a
    }
}

/// Swimmer gait task with residual actions.
#[derive(Debug, Clone)]
pub struct SwimmerTask {
    config: EnvConfig,
    bgps: BgpsConfig,
    model: SwimmerModel,
    state: EnvState,
    last: Option<Transition>,
}

impl SwimmerTask {
    pub fn new(config: EnvConfig, bgps: BgpsConfig) -> Result<Self> {
        config.validate()?;
        bgps.validate()?;
        Ok(Self { config, bgps, model: config.model(), state: env_reset(&config), last: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn bgps(&self) -> &BgpsConfig {
        &self.bgps
    }

    pub fn env_state(&self) -> &EnvState {
        &self.state
    }

    /// The most recent transition, with the executed (clamped) action.
    pub fn last_transition(&self) -> Option<&Transition> {
        self.last.as_ref()
    }
}

impl Environment for SwimmerTask {
    type State = EnvState;

    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn initial_log_std(&self) -> f64 {
        initial_log_std(self.bgps.action_range)
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> Result<()> {
        self.state = env_reset(&self.config);
        self.last = None;
        Ok(())
    }

    fn observation(&self) -> Vec<f64> {
        self.state.observation(self.config.time_features)
    }

    fn step(&mut self, action: &[f64]) -> Result<Feedback> {
        if action.len() != 2 {
            return Err(Error::ShapeMismatch { expected: 2, got: action.len() });
        }
        let a = self.bgps.compose(&self.state, action);
        let tr = env_step_with(&self.model, &self.state, a, &self.config)?;
        self.state = tr.next_state;
        self.last = Some(tr);
        Ok(Feedback { reward: tr.reward, done: tr.done })
    }

    fn state(&self) -> EnvState {
        self.state
    }

    fn set_state(&mut self, state: EnvState) {
        self.state = state;
        self.last = None;
    }
}

/// Drive a point on a line to the origin: `p += STEP * clip(a, -1, 1)`,
/// reward `max(0, 1 - |p|)` per step, start uniform in `[-START, START]`.
#[derive(Debug, Clone, Default)]
pub struct PointMass {
    state: PointMassState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMassState {
    pub position: f64,
    pub step: usize,
}

impl PointMass {
    pub const STEP: f64 = 0.2;
    pub const START: f64 = 2.0;
    pub const EPISODE_STEPS: usize = 25;

    pub fn new() -> Self {
        Self::default()
    }

    /// Moves straight to the target at full speed without overshoot.
    pub fn optimal_action(position: f64) -> f64 {
        (-position / Self::STEP).clamp(-1.0, 1.0)
    }
}

impl Environment for PointMass {
    type State = PointMassState;

    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn initial_log_std(&self) -> f64 {
        initial_log_std(1.0)
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        self.state = PointMassState { position: rng.random_range(-Self::START..Self::START), step: 0 };
        Ok(())
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.state.position]
    }

    fn step(&mut self, action: &[f64]) -> Result<Feedback> {
        let a = action.first().copied().unwrap_or(0.0);
        let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
        self.state.position += Self::STEP * a;
        self.state.step += 1;
        Ok(Feedback {
            reward: (1.0 - self.state.position.abs()).max(0.0),
            done: self.state.step >= Self::EPISODE_STEPS,
        })
    }

    fn state(&self) -> PointMassState {
        self.state
    }

    fn set_state(&mut self, state: PointMassState) {
        self.state = state;
    }
}
