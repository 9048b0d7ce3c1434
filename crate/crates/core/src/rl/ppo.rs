//! Clipped-surrogate policy optimisation with hand-written gradients.
//!
//! Trainable parameters are handled as one flat vector laid out as
//! `[policy mean network | log_std | value network]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::gae::gae;
use crate::rl::mlp::Mlp;
use crate::rl::policy::{entropy, log_prob, GaussianPolicy};

const ADV_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub steps_per_update: usize,
    pub total_steps: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Environment steps between deterministic evaluations.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Environment steps between checkpoints.
    pub checkpoint_every: usize,
    /// Divide rewards by a running standard deviation of the discounted return.
    pub normalize_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            epochs_per_update: 10,
            minibatch_size: 64,
            steps_per_update: 2048,
            total_steps: 300_000,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            seed: 0,
            hidden: vec![64, 64],
            eval_every: 10_240,
            eval_episodes: 1,
            checkpoint_every: 20_480,
            normalize_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.steps_per_update == 0 {
            return bad("epochs_per_update, minibatch_size and steps_per_update must be positive");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every, eval_episodes and checkpoint_every must be positive");
        }
        Ok(())
    }
}

/// One update's worth of on-policy experience.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    pub observations: Vec<Vec<f64>>,
    /// Raw (unclipped) residual actions.
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            observations: Vec::with_capacity(capacity),
            actions: Vec::with_capacity(capacity),
            log_probs: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, log_prob: f64, reward: f64, value: f64, done: bool) {
        debug_assert!(!self.is_full());
        self.observations.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
    }
}

/// A single training sample for the loss.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// Whether the clipped branch is the active minimum (zero policy gradient).
fn clipped(ratio: f64, advantage: f64, epsilon: f64) -> bool {
    (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    pub fn is_finite(&self) -> bool {
        self.policy_loss.is_finite() && self.value_loss.is_finite() && self.total.is_finite()
    }
}

pub fn num_params(policy: &GaussianPolicy, value: &Mlp) -> usize {
    policy.mean.params().len() + policy.log_std.len() + value.params().len()
}

pub fn flat_params(policy: &GaussianPolicy, value: &Mlp) -> Vec<f64> {
    let mut v = Vec::with_capacity(num_params(policy, value));
    v.extend_from_slice(policy.mean.params());
    v.extend_from_slice(&policy.log_std);
    v.extend_from_slice(value.params());
    v
}

pub fn set_flat_params(policy: &mut GaussianPolicy, value: &mut Mlp, flat: &[f64]) {
    let a = policy.mean.params().len();
    let b = a + policy.log_std.len();
    policy.mean.params_mut().copy_from_slice(&flat[..a]);
    policy.log_std.copy_from_slice(&flat[a..b]);
    value.params_mut().copy_from_slice(&flat[b..]);
}

/// Mean loss over `batch`,
/// `-surrogate + value_coef (V - R)^2 - entropy_coef H`,
/// with its gradient written into `grad` (flat layout, overwritten).
pub fn loss_and_grad(
    policy: &GaussianPolicy,
    value: &Mlp,
    batch: &[Sample<'_>],
    cfg: &PpoConfig,
    grad: &mut [f64],
) -> Result<LossStats> {
    let n_mean = policy.mean.params().len();
    let n_std = policy.log_std.len();
    if grad.len() != num_params(policy, value) {
        return Err(Error::ShapeMismatch { expected: num_params(policy, value), got: grad.len() });
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (g_mean, rest) = grad.split_at_mut(n_mean);
    let (g_std, g_value) = rest.split_at_mut(n_std);

    let inv_n = 1.0 / batch.len() as f64;
    let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
    let mut stats = LossStats::default();
    let mut d_mu = vec![0.0; n_std];
    for s in batch {
        let cache = policy.mean.forward(s.obs)?;
        let mu = cache.output();
        if s.action.len() != n_std {
            return Err(Error::ShapeMismatch { expected: n_std, got: s.action.len() });
        }
        let lp = log_prob(mu, &policy.log_std, s.action);
        let ratio = (lp - s.old_log_prob).exp();
        stats.policy_loss -= surrogate(ratio, s.advantage, cfg.clip_epsilon) * inv_n;
        if clipped(ratio, s.advantage, cfg.clip_epsilon) {
            stats.clip_fraction += inv_n;
        } else {
            // d(-ratio A)/d(log p) = -ratio A
            let coeff = -ratio * s.advantage * inv_n;
            for k in 0..n_std {
                let z = (s.action[k] - mu[k]) / std[k];
                d_mu[k] = coeff * z / std[k];
                g_std[k] += coeff * (z * z - 1.0);
            }
            policy.mean.backward(&cache, &d_mu, g_mean)?;
        }

        let vcache = value.forward(s.obs)?;
        let err = vcache.output()[0] - s.ret;
        stats.value_loss += err * err * inv_n;
        value.backward(&vcache, &[2.0 * cfg.value_coef * err * inv_n], g_value)?;
    }
    stats.entropy = entropy(&policy.log_std);
    for g in g_std.iter_mut() {
        *g -= cfg.entropy_coef;
    }
    stats.total = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    Ok(stats)
}

/// Scales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-12);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Gradient-descent step on `params`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powf(self.step as f64);
        let b2t = 1.0 - self.beta2.powf(self.step as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / b1t) / ((*v / b2t).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Running mean and variance (parallel-update form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMoments {
    fn default() -> Self {
        Self { mean: 0.0, var: 1.0, count: 1e-4 }
    }
}

impl RunningMoments {
    pub fn update(&mut self, x: f64) {
        let total = self.count + 1.0;
        let delta = x - self.mean;
        self.mean += delta / total;
        let m2 = self.var * self.count + delta * delta * self.count / total;
        self.var = m2 / total;
        self.count = total;
    }
}

/// Scales rewards by the spread of the discounted return seen so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub moments: RunningMoments,
    pub discounted_return: f64,
}

impl RewardScaler {
    const CLIP: f64 = 10.0;
    const EPS: f64 = 1e-8;

    pub fn scale(&mut self, reward: f64, done: bool, gamma: f64) -> f64 {
        self.discounted_return = self.discounted_return * gamma + reward;
        self.moments.update(self.discounted_return);
        if done {
            self.discounted_return = 0.0;
        }
        (reward / (self.moments.var + Self::EPS).sqrt()).clamp(-Self::CLIP, Self::CLIP)
    }
}

/// Advantages normalised to zero mean and unit standard deviation.
pub fn normalize(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (sd + ADV_EPS));
}

/// Runs `epochs_per_update` passes of shuffled minibatch Adam steps over a
/// full buffer and clears it. `last_value` bootstraps the final step.
///
/// `env_steps` only labels a [`Error::NonFiniteLoss`].
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &mut RolloutBuffer,
    last_value: f64,
    policy: &mut GaussianPolicy,
    value: &mut Mlp,
    adam: &mut Adam,
    cfg: &PpoConfig,
    rng: &mut R,
    env_steps: usize,
) -> Result<UpdateStats> {
    if !buffer.is_full() {
        return Err(Error::LengthMismatch(format!(
            "update needs a full buffer ({} of {})",
            buffer.len(),
            buffer.capacity()
        )));
    }
    let (mut adv, returns) = gae(&buffer.rewards, &buffer.values, &buffer.dones, last_value, cfg.gamma, cfg.gae_lambda)?;
    normalize(&mut adv);

    let n = buffer.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut flat = flat_params(policy, value);
    let mut grad = vec![0.0; flat.len()];
    let mut totals = UpdateStats::default();
    let mut batches = 0usize;
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .map(|&i| Sample {
                    obs: &buffer.observations[i],
                    action: &buffer.actions[i],
                    old_log_prob: buffer.log_probs[i],
                    advantage: adv[i],
                    ret: returns[i],
                })
                .collect();
            let stats = loss_and_grad(policy, value, &batch, cfg, &mut grad)?;
            let grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            if !stats.is_finite() || !grad_norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    env_steps,
                    detail: format!(
                        "policy_loss {}, value_loss {}, grad_norm {grad_norm}",
                        stats.policy_loss, stats.value_loss
                    ),
                });
            }
            adam.apply(&mut flat, &grad, cfg.learning_rate);
            set_flat_params(policy, value, &flat);
            policy.clamp_log_std();
            flat.copy_from_slice(&flat_params(policy, value));
            totals.policy_loss += stats.policy_loss;
            totals.value_loss += stats.value_loss;
            totals.clip_fraction += stats.clip_fraction;
            batches += 1;
        }
    }
    let b = batches as f64;
    buffer.clear();
    Ok(UpdateStats {
        policy_loss: totals.policy_loss / b,
        value_loss: totals.value_loss / b,
        entropy: policy.entropy(),
        clip_fraction: totals.clip_fraction / b,
    })
}
