//! Training loop, checkpoints and deterministic evaluation.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::env::{rollout, EnvConfig, RolloutSummary};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::rl::mlp::Mlp;
use crate::rl::policy::GaussianPolicy;
use crate::rl::ppo::{num_params, ppo_update, Adam, PpoConfig, RewardScaler, RolloutBuffer};
use crate::rl::task::{BgpsConfig, Environment, SwimmerTask};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const CURVE_CSV_HEADER: &str = "env_steps,mean_episode_reward,policy_loss,value_loss,entropy";
pub const EVAL_CSV_HEADER: &str = "env_steps,eval_reward";
/// Completed episodes averaged when an update finishes none.
const EPISODE_WINDOW: usize = 10;
const EVAL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub const CURVE_FILE: &str = "curve.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const BEST_FILE: &str = "best.json";
pub const FINAL_FILE: &str = "final.json";
pub const ABORT_FILE: &str = "aborted.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub env_steps: usize,
    /// `None` until the first episode completes.
    pub mean_episode_reward: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub env_steps: usize,
    pub reward: f64,
}

/// Position of a ChaCha stream, enough to continue it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed().to_vec(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::InvalidParameter("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad rng word position '{}'", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Complete trainer state at an update boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Full configuration echo; always holds a `ppo` section.
    pub config: Value,
    pub policy: Mlp,
    pub value: Mlp,
    pub log_std: Vec<f64>,
    pub rng_state: RngState,
    pub env_steps: usize,
    pub updates: usize,
    pub optimizer: Adam,
    pub env_state: Value,
    pub episode_return: f64,
    pub recent_returns: Vec<f64>,
    pub reward_scaler: RewardScaler,
    pub curve: Vec<CurveRow>,
    pub evals: Vec<EvalRow>,
}

impl Checkpoint {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let json_err = |source| Error::Json { path: path.to_path_buf(), source };
        let raw: Value = serde_json::from_str(text).map_err(json_err)?;
        let found = raw.get("schema_version").and_then(Value::as_u64).unwrap_or(0);
        if found != CHECKPOINT_SCHEMA_VERSION as u64 {
            return Err(Error::CheckpointSchemaMismatch {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(raw).map_err(json_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn policy(&self) -> Result<GaussianPolicy> {
        GaussianPolicy::new(self.policy.clone(), self.log_std.clone())
    }

    pub fn ppo_config(&self) -> Result<PpoConfig> {
        self.section("ppo")
    }

    /// Deserialises one section of the configuration echo.
    pub fn section<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .config
            .get(key)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("checkpoint config has no '{key}' section")))?;
        serde_json::from_value(v).map_err(|e| Error::InvalidParameter(format!("checkpoint '{key}' section: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub env_steps: usize,
    /// Deterministic evaluation of the final policy.
    pub final_eval: f64,
    /// Highest periodic evaluation.
    pub best_eval: Option<EvalRow>,
    pub curve: Vec<CurveRow>,
    pub evals: Vec<EvalRow>,
}

pub struct Trainer<E: Environment> {
    cfg: PpoConfig,
    config: Value,
    env: E,
    eval_template: E,
    policy: GaussianPolicy,
    value: Mlp,
    adam: Adam,
    rng: ChaCha8Rng,
    env_steps: usize,
    updates: usize,
    episode_return: f64,
    recent_returns: VecDeque<f64>,
    reward_scaler: RewardScaler,
    curve: Vec<CurveRow>,
    evals: Vec<EvalRow>,
    out_dir: Option<PathBuf>,
}

fn config_with_ppo(extra: Value, cfg: &PpoConfig) -> Result<Value> {
    let mut config = match extra {
        Value::Null => json!({}),
        Value::Object(_) => extra,
        _ => return Err(Error::InvalidParameter("configuration echo must be an object".into())),
    };
    config["ppo"] = serde_json::to_value(cfg).expect("ppo config serialises");
    Ok(config)
}

impl<E: Environment> Trainer<E> {
    /// Fresh run. `extra` is echoed into checkpoints next to the PPO settings.
    pub fn new(env: E, cfg: PpoConfig, extra: Value, out_dir: Option<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let config = config_with_ppo(extra, &cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let policy = GaussianPolicy::init(env.obs_dim(), env.action_dim(), &cfg.hidden, env.initial_log_std(), &mut rng)?;
        let sizes: Vec<usize> = std::iter::once(env.obs_dim()).chain(cfg.hidden.iter().copied()).chain([1]).collect();
        let value = Mlp::init(&sizes, 1.0, &mut rng)?;
        let adam = Adam::new(num_params(&policy, &value));
        let eval_template = env.clone();
        let mut env = env;
        env.reset(&mut rng)?;
        Ok(Self {
            cfg,
            config,
            env,
            eval_template,
            policy,
            value,
            adam,
            rng,
            env_steps: 0,
            updates: 0,
            episode_return: 0.0,
            recent_returns: VecDeque::new(),
            reward_scaler: RewardScaler::default(),
            curve: Vec::new(),
            evals: Vec::new(),
            out_dir,
        })
    }

    /// Continues from a checkpoint. `env` must be built from the same
    /// configuration; its dynamic state is replaced.
    pub fn resume(checkpoint: Checkpoint, env: E, out_dir: Option<PathBuf>) -> Result<Self> {
        let cfg = checkpoint.ppo_config()?;
        cfg.validate()?;
        let policy = checkpoint.policy()?;
        if policy.mean.input_dim() != env.obs_dim() || policy.action_dim() != env.action_dim() {
            return Err(Error::ShapeMismatch { expected: env.obs_dim(), got: policy.mean.input_dim() });
        }
        let eval_template = env.clone();
        let mut env = env;
        let state: E::State = serde_json::from_value(checkpoint.env_state.clone())
            .map_err(|e| Error::InvalidParameter(format!("checkpoint env_state: {e}")))?;
        env.set_state(state);
        Ok(Self {
            rng: checkpoint.rng_state.restore()?,
            cfg,
            config: checkpoint.config,
            env,
            eval_template,
            policy,
            value: checkpoint.value,
            adam: checkpoint.optimizer,
            env_steps: checkpoint.env_steps,
            updates: checkpoint.updates,
            episode_return: checkpoint.episode_return,
            recent_returns: checkpoint.recent_returns.into(),
            reward_scaler: checkpoint.reward_scaler,
            curve: checkpoint.curve,
            evals: checkpoint.evals,
            out_dir,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn evals(&self) -> &[EvalRow] {
        &self.evals
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn total_updates(&self) -> usize {
        self.cfg.total_steps.div_ceil(self.cfg.steps_per_update)
    }

    pub fn is_finished(&self) -> bool {
        self.updates >= self.total_updates()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.config.clone(),
            policy: self.policy.mean.clone(),
            value: self.value.clone(),
            log_std: self.policy.log_std.clone(),
            rng_state: RngState::capture(&self.rng),
            env_steps: self.env_steps,
            updates: self.updates,
            optimizer: self.adam.clone(),
            env_state: serde_json::to_value(self.env.state()).expect("environment state serialises"),
            episode_return: self.episode_return,
            recent_returns: self.recent_returns.iter().copied().collect(),
            reward_scaler: self.reward_scaler.clone(),
            curve: self.curve.clone(),
            evals: self.evals.clone(),
        }
    }

    /// Mean deterministic return over `eval_episodes` on a fresh environment.
    pub fn evaluate(&self) -> Result<f64> {
        let rewards = evaluate_mean_action(&self.policy, &self.eval_template, self.cfg.eval_episodes, self.cfg.seed)?;
        Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
    }

    pub fn best_eval(&self) -> Option<EvalRow> {
        self.evals.iter().copied().fold(None, |best: Option<EvalRow>, e| match best {
            Some(b) if b.reward >= e.reward => Some(b),
            _ => Some(e),
        })
    }

    /// Collects one buffer, updates, logs and evaluates as scheduled.
    pub fn step_update(&mut self) -> Result<()> {
        let mut buffer = RolloutBuffer::new(self.cfg.steps_per_update);
        let mut finished = Vec::new();
        let start_steps = self.env_steps;
        while !buffer.is_full() {
            let obs = self.env.observation();
            let (action, log_prob) = self.policy.sample(&obs, &mut self.rng)?;
            let v = self.value.predict(&obs)?[0];
            let fb = self.env.step(&action)?;
            self.env_steps += 1;
            self.episode_return += fb.reward;
            let r = if self.cfg.normalize_rewards {
                self.reward_scaler.scale(fb.reward, fb.done, self.cfg.gamma)
            } else {
                fb.reward
            };
            buffer.push(obs, action, log_prob, r, v, fb.done);
            if fb.done {
                finished.push(self.episode_return);
                self.recent_returns.push_back(self.episode_return);
                if self.recent_returns.len() > EPISODE_WINDOW {
                    self.recent_returns.pop_front();
                }
                self.episode_return = 0.0;
                self.env.reset(&mut self.rng)?;
            }
        }
        let last_value = self.value.predict(&self.env.observation())?[0];
        let stats = ppo_update(
            &mut buffer,
            last_value,
            &mut self.policy,
            &mut self.value,
            &mut self.adam,
            &self.cfg,
            &mut self.rng,
            self.env_steps,
        )?;
        self.updates += 1;

        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let recent: Vec<f64> = self.recent_returns.iter().copied().collect();
        self.curve.push(CurveRow {
            env_steps: self.env_steps,
            mean_episode_reward: mean(&finished).or_else(|| mean(&recent)),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
        });
        self.write_curve()?;

        let crossed = |every: usize| start_steps / every != self.env_steps / every;
        if crossed(self.cfg.eval_every) || self.is_finished() {
            let previous_best = self.best_eval();
            let reward = self.evaluate()?;
            self.evals.push(EvalRow { env_steps: self.env_steps, reward });
            self.write_evals()?;
            if previous_best.is_none_or(|b| reward > b.reward) {
                self.save(BEST_FILE)?;
            }
        }
        if crossed(self.cfg.checkpoint_every) || self.is_finished() {
            self.save(CHECKPOINT_FILE)?;
        }
        Ok(())
    }

    /// Trains until `total_steps` (rounded up to whole updates).
    pub fn run(&mut self) -> Result<TrainOutcome> {
        while !self.is_finished() {
            if let Err(e) = self.step_update() {
                // keep the state that failed for inspection; the last good
                // checkpoint stays untouched
                let _ = self.save(ABORT_FILE);
                return Err(e);
            }
        }
        let final_eval = match self.evals.last() {
            Some(e) if e.env_steps == self.env_steps => e.reward,
            _ => self.evaluate()?,
        };
        self.save(FINAL_FILE)?;
        Ok(TrainOutcome {
            env_steps: self.env_steps,
            final_eval,
            best_eval: self.best_eval(),
            curve: self.curve.clone(),
            evals: self.evals.clone(),
        })
    }

    fn save(&self, name: &str) -> Result<()> {
        match &self.out_dir {
            Some(dir) => self.checkpoint().save(&dir.join(name)),
            None => Ok(()),
        }
    }

    fn write_curve(&self) -> Result<()> {
        match &self.out_dir {
            Some(dir) => write_atomic(&dir.join(CURVE_FILE), curve_csv(&self.curve).as_bytes()),
            None => Ok(()),
        }
    }

    fn write_evals(&self) -> Result<()> {
        match &self.out_dir {
            Some(dir) => write_atomic(&dir.join(EVAL_FILE), eval_csv(&self.evals).as_bytes()),
            None => Ok(()),
        }
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.env_steps,
            r.mean_episode_reward.unwrap_or(f64::NAN),
            r.policy_loss,
            r.value_loss,
            r.entropy
        );
    }
    out
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{}", r.env_steps, r.reward);
    }
    out
}

/// Per-episode returns of the mean action on fresh copies of `env`.
pub fn evaluate_mean_action<E: Environment>(
    policy: &GaussianPolicy,
    env: &E,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_SEED_SALT);
    let mut env = env.clone();
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(&mut rng)?;
        let mut total = 0.0;
        loop {
            let fb = env.step(&policy.mean_action(&env.observation())?)?;
            total += fb.reward;
            if fb.done {
                break;
            }
        }
        out.push(total);
    }
    Ok(out)
}

/// Configuration echo for swimmer runs.
pub fn swimmer_config_echo(env: &EnvConfig, bgps: &BgpsConfig) -> Value {
    json!({ "env": env, "bgps": bgps })
}

/// Trains a residual policy on the swimmer task.
pub fn train(env: &EnvConfig, bgps: &BgpsConfig, ppo: &PpoConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let task = SwimmerTask::new(*env, *bgps)?;
    let mut trainer = Trainer::new(task, ppo.clone(), swimmer_config_echo(env, bgps), out_dir.map(Path::to_path_buf))?;
    trainer.run()
}

/// Continues a swimmer run from its latest checkpoint in `out_dir`.
pub fn resume(out_dir: &Path) -> Result<TrainOutcome> {
    let ck = Checkpoint::load(&out_dir.join(CHECKPOINT_FILE))?;
    let env: EnvConfig = ck.section("env")?;
    let bgps: BgpsConfig = ck.section("bgps")?;
    let task = SwimmerTask::new(env, bgps)?;
    let mut trainer = Trainer::resume(ck, task, Some(out_dir.to_path_buf()))?;
    trainer.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_reward: f64,
    pub episodes: Vec<RolloutSummary>,
}

/// Deterministic (mean-action) swimmer evaluation.
pub fn evaluate_policy(policy: &GaussianPolicy, env: &EnvConfig, bgps: &BgpsConfig, episodes: usize) -> Result<EvalReport> {
    bgps.validate()?;
    if episodes == 0 {
        return Err(Error::InvalidParameter("need at least one evaluation episode".into()));
    }
    let mut summaries = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut failure = None;
        let ro = rollout(
            |s| match policy.mean_action(&s.observation(env.time_features)) {
                Ok(mu) => bgps.compose(s, &mu),
                Err(e) => {
                    failure.get_or_insert(e);
                    bgps.base_action(s)
                }
            },
            env,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        summaries.push(ro.summary);
    }
    let mean_reward = summaries.iter().map(|s| s.total_reward).sum::<f64>() / episodes as f64;
    Ok(EvalReport { mean_reward, episodes: summaries })
}

/// [`evaluate_policy`] on a checkpoint file.
pub fn evaluate_checkpoint(path: &Path, env: &EnvConfig, bgps: &BgpsConfig, episodes: usize) -> Result<EvalReport> {
    evaluate_policy(&Checkpoint::load(path)?.policy()?, env, bgps, episodes)
}
