//! Diagonal Gaussian policy with a state-independent standard deviation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::rl::mlp::Mlp;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Scale of the mean network's output layer at initialisation.
pub const OUTPUT_INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

/// `log std` that gives an initial spread of half the action range.
pub fn initial_log_std(action_range: f64) -> f64 {
    if action_range > 0.0 {
        (0.5 * action_range).ln().clamp(LOG_STD_MIN, LOG_STD_MAX)
    } else {
        LOG_STD_MIN
    }
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, log_std: Vec<f64>) -> Result<Self> {
        if log_std.len() != mean.output_dim() {
            return Err(Error::ShapeMismatch { expected: mean.output_dim(), got: log_std.len() });
        }
        let mut p = Self { mean, log_std };
        p.clamp_log_std();
        Ok(p)
    }

    /// Fresh policy: hidden layers `hidden`, near-zero output layer.
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).chain([action_dim]).collect();
        Self::new(Mlp::init(&sizes, OUTPUT_INIT_SCALE, rng)?, vec![log_std; action_dim])
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = if v.is_nan() { LOG_STD_MIN } else { v.clamp(LOG_STD_MIN, LOG_STD_MAX) };
        }
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.predict(obs)
    }

    /// Draws `mean + exp(log_std) * z` and returns it with its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.predict(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let lp = log_prob(&mu, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.log_std)
    }
}

/// Diagonal Gaussian log-density.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
}

/// Baseline plus the residual clipped componentwise to `[-delta, delta]`.
/// A NaN residual component contributes nothing.
pub fn compose_action(baseline: Action, residual: &[f64], delta: f64) -> Action {
    let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-delta, delta) };
    Action::new(baseline.adot1 + c(residual[0]), baseline.adot2 + c(residual[1]))
}
