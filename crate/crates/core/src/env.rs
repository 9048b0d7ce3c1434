//! Gait environment: joint-rate actions drive the swimmer through the
//! kinematic reconstruction `xi = -A(alpha) alpha_dot`.
//!
//! The transition function is pure. Positions `x, y` ride along in
//! [`EnvState`] for reward computation but never enter the observation.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::JointLoop;
use crate::fsio::write_atomic;
use crate::geometry::body_to_world;
use crate::swimmer::{
    ConnectionModel, HighReParams, LowReParams, Shape, SwimmerKind, SwimmerModel,
};

type State5 = SMatrix<f64, 5, 1>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Distance,
    Energy,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(RewardMode::Distance),
            "energy" => Ok(RewardMode::Energy),
            other => Err(Error::InvalidParameter(format!("unknown reward mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardMode::Distance => "distance",
            RewardMode::Energy => "energy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Start on the baseline gait at t = 0.
    BaselineT0,
    /// Start straight.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub swimmer: SwimmerKind,
    pub low_re: LowReParams,
    pub high_re: HighReParams,
    /// Control period (s).
    pub dt: f64,
    pub episode_steps: usize,
    pub reward_mode: RewardMode,
    /// Weight of the actuation penalty in energy mode.
    pub beta: f64,
    /// Charge `beta * |alpha_dot|` per step instead of per second.
    pub legacy_energy: bool,
    pub joint_limit: f64,
    pub max_joint_speed: f64,
    pub reset_mode: ResetMode,
    /// Observe `(sin t, cos t)` instead of raw `t`.
    pub time_features: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            swimmer: SwimmerKind::LowRe,
            low_re: LowReParams::default(),
            high_re: HighReParams::default(),
            dt: 0.04,
            episode_steps: 500,
            reward_mode: RewardMode::Distance,
            beta: 0.1,
            legacy_energy: false,
            joint_limit: 3.0,
            max_joint_speed: 1.5,
            reset_mode: ResetMode::BaselineT0,
            time_features: true,
        }
    }
}

impl EnvConfig {
    pub fn for_swimmer(kind: SwimmerKind) -> Self {
        Self { swimmer: kind, ..Self::default() }
    }

    pub fn model(&self) -> SwimmerModel {
        match self.swimmer {
            SwimmerKind::LowRe => SwimmerModel::LowRe(self.low_re),
            SwimmerKind::HighRe => SwimmerModel::HighRe(self.high_re),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.episode_steps < 1 {
            return bad("episode_steps must be at least 1");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(self.joint_limit > 0.0) {
            return bad("joint_limit must be positive");
        }
        if !(self.max_joint_speed > 0.0) {
            return bad("max_joint_speed must be positive");
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        if self.time_features {
            5
        } else {
            4
        }
    }
}

/// Observable shape and heading plus the hidden planar position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta: f64,
    pub t: f64,
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

impl EnvState {
    pub fn shape(&self) -> Shape {
        Shape::new(self.alpha1, self.alpha2)
    }

    /// Policy input: `(alpha1, alpha2, theta, sin t, cos t)` or raw `t`.
    pub fn observation(&self, time_features: bool) -> Vec<f64> {
        if time_features {
            vec![self.alpha1, self.alpha2, self.theta, self.t.sin(), self.t.cos()]
        } else {
            vec![self.alpha1, self.alpha2, self.theta, self.t]
        }
    }

    fn is_finite(&self) -> bool {
        [self.alpha1, self.alpha2, self.theta, self.x, self.y].iter().all(|v| v.is_finite())
    }
}

/// Joint-rate command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub adot1: f64,
    pub adot2: f64,
}

impl Action {
    pub const ZERO: Action = Action { adot1: 0.0, adot2: 0.0 };

    pub fn new(adot1: f64, adot2: f64) -> Self {
        Self { adot1, adot2 }
    }

    pub fn norm(&self) -> f64 {
        self.adot1.hypot(self.adot2)
    }

    fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.adot1, self.adot2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    /// Action after speed clamping.
    pub action: Action,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}

pub fn env_reset(config: &EnvConfig) -> EnvState {
    let shape = match config.reset_mode {
        ResetMode::BaselineT0 => GaitWaveform::baseline().shape_at(0.0),
        ResetMode::Zero => Shape::default(),
    };
    EnvState { alpha1: shape.alpha1, alpha2: shape.alpha2, theta: 0.0, t: 0.0, step: 0, x: 0.0, y: 0.0 }
}

/// Rate of `(alpha1, alpha2, x, y, theta)` under a constant joint rate.
fn flow<M: ConnectionModel + ?Sized>(model: &M, s: &State5, rate: Vector2<f64>) -> Result<State5> {
    let conn = model.connection(Shape::new(s[0], s[1]))?;
    let xi = conn.body_velocity(rate);
    let g = body_to_world(crate::geometry::Pose::new(s[2], s[3], s[4]), xi);
    Ok(State5::new(rate[0], rate[1], g[0], g[1], g[2]))
}

fn rk4_step<M: ConnectionModel + ?Sized>(model: &M, s: &State5, rate: Vector2<f64>, h: f64) -> Result<State5> {
    let k1 = flow(model, s, rate)?;
    let k2 = flow(model, &(s + k1 * (0.5 * h)), rate)?;
    let k3 = flow(model, &(s + k2 * (0.5 * h)), rate)?;
    let k4 = flow(model, &(s + k3 * h), rate)?;
    let mut next = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    // joint angles move linearly; keep them free of RK4 round-off
    next[0] = s[0] + rate[0] * h;
    next[1] = s[1] + rate[1] * h;
    Ok(next)
}

/// Holds `rate` for `dt`, stopping any joint that reaches `limit` for the
/// rest of the interval.
fn advance_saturating<M: ConnectionModel + ?Sized>(
    model: &M,
    start: State5,
    mut rate: Vector2<f64>,
    dt: f64,
    limit: f64,
) -> Result<State5> {
    let mut s = start;
    for i in 0..2 {
        s[i] = s[i].clamp(-limit, limit);
    }
    let mut remaining = dt;
    while remaining > 0.0 {
        let mut hit = [false; 2];
        let mut span = remaining;
        for i in 0..2 {
            if rate[i] == 0.0 {
                continue;
            }
            let bound = limit.copysign(rate[i]);
            let tau = (bound - s[i]) / rate[i];
            if tau <= 0.0 {
                rate[i] = 0.0;
            } else if tau <= span {
                span = tau;
            }
        }
        for i in 0..2 {
            if rate[i] != 0.0 && (limit.copysign(rate[i]) - s[i]) / rate[i] <= span {
                hit[i] = true;
            }
        }
        if rate[0] == 0.0 && rate[1] == 0.0 {
            break;
        }
        s = rk4_step(model, &s, rate, span)?;
        for i in 0..2 {
            if hit[i] {
                s[i] = limit.copysign(rate[i]);
                rate[i] = 0.0;
            }
        }
        remaining -= span;
    }
    Ok(s)
}

pub fn clamp_action(action: Action, max_speed: f64) -> Action {
    let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-max_speed, max_speed) };
    Action::new(c(action.adot1), c(action.adot2))
}

/// Step using a prebuilt model (avoids re-deriving it from the config).
pub fn env_step_with<M: ConnectionModel + ?Sized>(
    model: &M,
    state: &EnvState,
    action: Action,
    config: &EnvConfig,
) -> Result<Transition> {
    let u = clamp_action(action, config.max_joint_speed);
    let start = State5::new(state.alpha1, state.alpha2, state.x, state.y, state.theta);
    let end = if u == Action::ZERO {
        start
    } else {
        advance_saturating(model, start, u.to_vector(), config.dt, config.joint_limit)?
    };
    let step = state.step + 1;
    let next = EnvState {
        alpha1: end[0],
        alpha2: end[1],
        theta: end[4],
        t: step as f64 * config.dt,
        step,
        x: end[2],
        y: end[3],
    };
    if !next.is_finite() {
        return Err(Error::NonFiniteState { step });
    }
    let progress = next.x - state.x;
    let reward = match config.reward_mode {
        RewardMode::Distance => progress,
        RewardMode::Energy => {
            let per_step = if config.legacy_energy { 1.0 } else { config.dt };
            progress - config.beta * u.norm() * per_step
        }
    };
    Ok(Transition { state: *state, action: u, reward, next_state: next, done: step >= config.episode_steps })
}

pub fn env_step(state: &EnvState, action: Action, config: &EnvConfig) -> Result<Transition> {
    env_step_with(&config.model(), state, action, config)
}

/// Sinusoid `offset + amplitude * cos(frequency * t - phase)` for one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointWave {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
}

impl JointWave {
    pub fn angle(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.frequency * t - self.phase).cos()
    }

    pub fn rate(&self, t: f64) -> f64 {
        -self.amplitude * self.frequency * (self.frequency * t - self.phase).sin()
    }
}

/// Single-frequency joint-space gait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitWaveform {
    pub joints: [JointWave; 2],
}

impl GaitWaveform {
    pub fn new(amplitudes: [f64; 2], frequency: f64, phases: [f64; 2], offsets: [f64; 2]) -> Self {
        let j = |k: usize| JointWave { amplitude: amplitudes[k], frequency, phase: phases[k], offset: offsets[k] };
        Self { joints: [j(0), j(1)] }
    }

    /// `0.6 cos t` on both joints, the second lagging by 1 rad.
    pub fn baseline() -> Self {
        Self::new([0.6, 0.6], 1.0, [0.0, 1.0], [0.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        for j in &self.joints {
            if !(j.amplitude >= 0.0) || !(j.frequency > 0.0) {
                return Err(Error::InvalidParameter("waveforms need amplitude >= 0 and frequency > 0".into()));
            }
        }
        if self.joints[0].frequency != self.joints[1].frequency {
            return Err(Error::InvalidParameter("both joints must share one frequency to form a closed loop".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        TAU / self.joints[0].frequency
    }

    pub fn shape_at(&self, t: f64) -> Shape {
        Shape::new(self.joints[0].angle(t), self.joints[1].angle(t))
    }

    pub fn rate_at(&self, t: f64) -> Vector2<f64> {
        Vector2::new(self.joints[0].rate(t), self.joints[1].rate(t))
    }

    /// Same ellipse traversed the other way round.
    pub fn reversed(&self) -> Self {
        let mut w = *self;
        for j in &mut w.joints {
            j.phase = -j.phase;
        }
        w
    }

    /// Same loop at a different pace.
    pub fn with_frequency(&self, frequency: f64) -> Self {
        let mut w = *self;
        for j in &mut w.joints {
            j.frequency = frequency;
        }
        w
    }

    /// One period of the joint-space trace as a closed polyline.
    pub fn joint_loop(&self, segments: usize) -> Result<JointLoop> {
        let period = self.period();
        JointLoop::from_fn(segments, |u| self.shape_at(u * period))
    }
}

/// Joint-rate action that tracks the baseline gait exactly in continuous time.
pub fn baseline_policy(state: &EnvState) -> Action {
    let r = GaitWaveform::baseline().rate_at(state.t);
    Action::new(r[0], r[1])
}

/// Net motion produced by a gait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitDisplacement {
    /// Mean world-frame displacement per cycle.
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub cycles: usize,
}

pub const GAIT_STEPS_PER_CYCLE: usize = 2000;

/// Integrates the exact waveform (not the sampled environment) from the
/// identity pose over whole cycles.
pub fn evaluate_gait<M: ConnectionModel + ?Sized>(
    waveform: &GaitWaveform,
    model: &M,
    cycles: usize,
) -> Result<GaitDisplacement> {
    evaluate_gait_with_steps(waveform, model, cycles, GAIT_STEPS_PER_CYCLE)
}

pub fn evaluate_gait_with_steps<M: ConnectionModel + ?Sized>(
    waveform: &GaitWaveform,
    model: &M,
    cycles: usize,
    steps_per_cycle: usize,
) -> Result<GaitDisplacement> {
    waveform.validate()?;
    if cycles < 1 || steps_per_cycle < 1 {
        return Err(Error::InvalidParameter("cycles and steps_per_cycle must be at least 1".into()));
    }
    let period = waveform.period();
    let h = period / steps_per_cycle as f64;
    let rate = |g: &nalgebra::Vector3<f64>, t: f64| -> Result<nalgebra::Vector3<f64>> {
        let xi = model.connection(waveform.shape_at(t))?.body_velocity(waveform.rate_at(t));
        Ok(body_to_world(crate::geometry::Pose::new(g[0], g[1], g[2]), xi))
    };
    let mut g = nalgebra::Vector3::zeros();
    for c in 0..cycles {
        let t0 = c as f64 * period;
        for k in 0..steps_per_cycle {
            let t = t0 + k as f64 * h;
            let k1 = rate(&g, t)?;
            let k2 = rate(&(g + k1 * (0.5 * h)), t + 0.5 * h)?;
            let k3 = rate(&(g + k2 * (0.5 * h)), t + 0.5 * h)?;
            let k4 = rate(&(g + k3 * h), t + h)?;
            g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    let n = cycles as f64;
    Ok(GaitDisplacement { dx: g[0] / n, dy: g[1] / n, dtheta: g[2] / n, cycles })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub total_reward: f64,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    /// Mean of `|alpha_dot_i|` over steps and joints.
    pub mean_abs_rate: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub initial: EnvState,
    pub transitions: Vec<Transition>,
    pub summary: RolloutSummary,
}

pub fn summarize(initial: &EnvState, transitions: &[Transition]) -> RolloutSummary {
    let last = transitions.last().map_or(*initial, |t| t.next_state);
    let n = transitions.len();
    let rate_sum: f64 = transitions.iter().map(|t| t.action.adot1.abs() + t.action.adot2.abs()).sum();
    RolloutSummary {
        total_reward: transitions.iter().map(|t| t.reward).sum(),
        dx: last.x - initial.x,
        dy: last.y - initial.y,
        dtheta: last.theta - initial.theta,
        mean_abs_rate: if n == 0 { 0.0 } else { rate_sum / (2 * n) as f64 },
        steps: n,
    }
}

/// Runs one full episode from [`env_reset`].
pub fn rollout<P>(mut policy: P, config: &EnvConfig) -> Result<Rollout>
where
    P: FnMut(&EnvState) -> Action,
{
    config.validate()?;
    let model = config.model();
    let initial = env_reset(config);
    let mut state = initial;
    let mut transitions = Vec::with_capacity(config.episode_steps);
    loop {
        let tr = env_step_with(&model, &state, policy(&state), config)?;
        state = tr.next_state;
        transitions.push(tr);
        if tr.done {
            break;
        }
    }
    let summary = summarize(&initial, &transitions);
    Ok(Rollout { initial, transitions, summary })
}

pub const ROLLOUT_CSV_HEADER: &str = "step,t,alpha1,alpha2,theta,x,y,u1,u2,reward";

impl Rollout {
    /// One row per visited state; `u1, u2, reward` belong to the transition
    /// that led into the row's state (zero on the initial row).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.transitions.len() + 2));
        out.push_str(ROLLOUT_CSV_HEADER);
        out.push('\n');
        let mut row = |s: &EnvState, u: Action, r: f64| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.step, s.t, s.alpha1, s.alpha2, s.theta, s.x, s.y, u.adot1, u.adot2, r
            );
        };
        row(&self.initial, Action::ZERO, 0.0);
        for tr in &self.transitions {
            row(&tr.next_state, tr.action, tr.reward);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}
