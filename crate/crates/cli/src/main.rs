mod compare;
mod config;
mod exit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use linkswim::env::{baseline_policy, evaluate_gait, rollout, Action, GaitWaveform, RewardMode};
use linkswim::export::{export_field, ExportPaths, SvgStyle};
use linkswim::field::{exterior_derivative_field, GridSpec};
use linkswim::rl::{evaluate_policy, BgpsConfig, Checkpoint, SwimmerTask, Trainer};
use linkswim::swimmer::{ConnectionRow, SwimmerKind};

use crate::config::{load_with_overrides, RunConfig};
use crate::exit::UsageError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LINKSWIM_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "linkswim", version, about = "Three-link swimmer simulator, field exporter and residual-policy trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the curl of one connection row as CSV, SVG and metadata.
    Field(FieldArgs),
    /// Net displacement per cycle of a sinusoidal gait (defaults to the baseline).
    Gait(GaitArgs),
    /// Roll out one episode and write its trajectory CSV.
    Simulate(SimulateArgs),
    /// Train a residual policy, or continue a run with --resume.
    Train(TrainArgs),
    /// Deterministic evaluation of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Run or load a matrix of methods and print a comparison table.
    Compare(compare::CompareArgs),
}

/// Config file plus `--set section.key=value` overrides.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with optional [env], [bgps] and [ppo] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set env.dt=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        load_with_overrides(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long, default_value = "low-re")]
    swimmer: SwimmerKind,
    /// Connection row: x, y or theta.
    #[arg(long, default_value = "x")]
    row: ConnectionRow,
    #[arg(long, default_value_t = 3.0)]
    alpha_max: f64,
    /// Defaults to -alpha_max.
    #[arg(long, allow_negative_numbers = true)]
    alpha_min: Option<f64>,
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    /// Output directory; defaults to `<out root>/fields`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File stem; defaults to `<swimmer>-d<row>`.
    #[arg(long)]
    stem: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GaitArgs {
    #[arg(long, default_value = "low-re")]
    swimmer: SwimmerKind,
    /// Joint amplitudes `a1,a2` (rad).
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.6, 0.6])]
    amplitude: Vec<f64>,
    /// Angular frequency (rad/s).
    #[arg(long, default_value_t = 1.0)]
    frequency: f64,
    /// Joint phases `p1,p2` (rad).
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true, default_values_t = [0.0, 1.0])]
    phase: Vec<f64>,
    /// Joint offsets `o1,o2` (rad).
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true, default_values_t = [0.0, 0.0])]
    offset: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    cycles: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// `baseline`, `zero`, or a checkpoint file.
    #[arg(long, default_value = "baseline")]
    policy: String,
    #[arg(long)]
    swimmer: Option<SwimmerKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    reward: Option<RewardMode>,
    /// Rollout CSV; defaults to `<out root>/rollout.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for uniformity; rollouts are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Continue the run in this directory from its latest checkpoint.
    #[arg(long, conflicts_with_all = ["config", "overrides", "seed", "total_steps", "action_range", "swimmer", "reward", "out"])]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    action_range: Option<f64>,
    #[arg(long)]
    swimmer: Option<SwimmerKind>,
    #[arg(long)]
    reward: Option<RewardMode>,
    /// Run directory; defaults to `out_dir` from the config, then to a name
    /// under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-evaluation progress lines.
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint JSON (checkpoint.json, best.json or final.json).
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
}

pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their source in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Field(a) => cmd_field(a),
        Command::Gait(a) => cmd_gait(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => compare::cmd_compare(a),
    }
}

fn cmd_field(a: FieldArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    cfg.env.swimmer = a.swimmer;
    cfg.validate()?;
    let grid = GridSpec::new(a.alpha_min.unwrap_or(-a.alpha_max), a.alpha_max, a.resolution)
        .map_err(|e| UsageError(e.to_string()))?;
    let field = exterior_derivative_field(&cfg.env.model(), &grid, a.row)?;
    let dir = a.out.unwrap_or_else(|| out_root().join("fields"));
    let stem = a.stem.unwrap_or_else(|| format!("{}-d{}", a.swimmer, a.row.label()));
    let paths = ExportPaths::with_stem(&dir, &stem);
    let meta = export_field(&field, &paths, &SvgStyle::default())?;
    println!("{}", paths.csv.display());
    println!("{}", paths.svg.display());
    println!("{}", paths.meta.display());
    println!(
        "rows {} missing {} color_limit {} zero_contours {}",
        meta.rows, meta.missing, meta.color_limit, meta.contour_paths
    );
    Ok(())
}

fn cmd_gait(a: GaitArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    cfg.env.swimmer = a.swimmer;
    cfg.validate()?;
    let gait = GaitWaveform::new(
        [a.amplitude[0], a.amplitude[1]],
        a.frequency,
        [a.phase[0], a.phase[1]],
        [a.offset[0], a.offset[1]],
    );
    gait.validate().map_err(|e| UsageError(e.to_string()))?;
    let d = evaluate_gait(&gait, &cfg.env.model(), a.cycles)?;
    println!("dx {}", d.dx);
    println!("dy {}", d.dy);
    println!("dtheta {}", d.dtheta);
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let checkpoint = match a.policy.as_str() {
        "baseline" | "zero" => None,
        path => Some(Checkpoint::load(Path::new(path))?),
    };
    let mut cfg = a.config.load()?;
    // without explicit settings a checkpoint replays in its own environment
    if let (Some(ck), None, true) = (&checkpoint, &a.config.config, a.config.overrides.is_empty()) {
        cfg.env = ck.section("env")?;
    }
    if let Some(s) = a.swimmer {
        cfg.env.swimmer = s;
    }
    if let Some(n) = a.steps {
        cfg.env.episode_steps = n;
    }
    if let Some(r) = a.reward {
        cfg.env.reward_mode = r;
    }
    cfg.validate()?;
    let env = cfg.env;
    let ro = match (a.policy.as_str(), checkpoint) {
        ("baseline", _) => rollout(baseline_policy, &env)?,
        ("zero", _) => rollout(|_| Action::ZERO, &env)?,
        (_, None) => unreachable!("checkpoint loaded above"),
        (_, Some(ck)) => {
            let bgps: BgpsConfig = ck.section("bgps")?;
            let policy = ck.policy()?;
            if policy.mean.input_dim() != env.obs_dim() {
                return Err(UsageError(format!(
                    "checkpoint expects {} observations, environment provides {}",
                    policy.mean.input_dim(),
                    env.obs_dim()
                ))
                .into());
            }
            let mut failure = None;
            let ro = rollout(
                |s| match policy.mean_action(&s.observation(env.time_features)) {
                    Ok(mu) => bgps.compose(s, &mu),
                    Err(e) => {
                        failure.get_or_insert(e);
                        bgps.base_action(s)
                    }
                },
                &env,
            )?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            ro
        }
    };
    let out = a.out.unwrap_or_else(|| out_root().join("rollout.csv"));
    ro.write_csv(&out)?;
    let s = ro.summary;
    println!("{}", out.display());
    println!("total_reward {}", s.total_reward);
    println!("dx {}", s.dx);
    println!("dy {}", s.dy);
    println!("dtheta {}", s.dtheta);
    Ok(())
}

/// Default run directory name for a resolved configuration.
pub fn run_name(cfg: &RunConfig) -> String {
    format!(
        "{}-{}-d{}-s{}{}",
        cfg.env.swimmer,
        cfg.env.reward_mode,
        cfg.bgps.action_range,
        cfg.ppo.seed,
        if cfg.bgps.use_baseline { "" } else { "-nobase" }
    )
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    if let Some(dir) = &a.resume {
        let ck_path = dir.join(linkswim::rl::train::CHECKPOINT_FILE);
        let ck = Checkpoint::load(&ck_path)?;
        let cfg = RunConfig {
            out_dir: Some(dir.clone()),
            env: ck.section("env")?,
            bgps: ck.section("bgps")?,
            ppo: ck.ppo_config()?,
        };
        let task = SwimmerTask::new(cfg.env, cfg.bgps)?;
        let trainer = Trainer::resume(ck, task, Some(dir.clone()))?;
        println!("resuming {} at {} steps", dir.display(), trainer.env_steps());
        return drive(trainer, dir, a.quiet);
    }
    let mut cfg = a.config.load()?;
    if let Some(s) = a.seed {
        cfg.ppo.seed = s;
    }
    if let Some(n) = a.total_steps {
        cfg.ppo.total_steps = n;
    }
    if let Some(d) = a.action_range {
        cfg.bgps.action_range = d;
    }
    if let Some(s) = a.swimmer {
        cfg.env.swimmer = s;
    }
    if let Some(r) = a.reward {
        cfg.env.reward_mode = r;
    }
    cfg.validate()?;
    let dir = a.out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| out_root().join(run_name(&cfg)));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.out_dir = Some(dir.clone());
    cfg.echo(&dir)?;
    let task = SwimmerTask::new(cfg.env, cfg.bgps)?;
    let echo = linkswim::rl::train::swimmer_config_echo(&cfg.env, &cfg.bgps);
    let trainer = Trainer::new(task, cfg.ppo.clone(), echo, Some(dir.clone()))?;
    drive(trainer, &dir, a.quiet)
}

fn drive(mut trainer: Trainer<SwimmerTask>, dir: &Path, quiet: bool) -> Result<()> {
    let mut seen = trainer.evals().len();
    while !trainer.is_finished() {
        if let Err(e) = trainer.step_update() {
            let _ = trainer.checkpoint().save(&dir.join(linkswim::rl::train::ABORT_FILE));
            return Err(e.into());
        }
        if !quiet {
            for e in &trainer.evals()[seen..] {
                println!("steps {} eval {}", e.env_steps, e.reward);
            }
        }
        seen = trainer.evals().len();
    }
    let outcome = trainer.run()?;
    println!("{}", dir.display());
    println!("env_steps {}", outcome.env_steps);
    println!("final_eval {}", outcome.final_eval);
    if let Some(b) = outcome.best_eval {
        println!("best_eval {} at {}", b.reward, b.env_steps);
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let env = ck.section("env")?;
    let bgps: BgpsConfig = ck.section("bgps")?;
    let report = evaluate_policy(&ck.policy()?, &env, &bgps, a.episodes)?;
    println!("mean_reward {}", report.mean_reward);
    for (i, s) in report.episodes.iter().enumerate() {
        println!("episode {i} reward {} dx {} dy {} dtheta {}", s.total_reward, s.dx, s.dy, s.dtheta);
    }
    Ok(())
}
