//! Method comparison over a matrix of (method, action range, task, swimmer,
//! seed) cells. Each cell lives in its own directory keyed by a hash of its
//! resolved configuration, so finished cells are reused on later calls.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use linkswim::env::{baseline_policy, rollout, RewardMode};
use linkswim::fsio::write_atomic;
use linkswim::rl::{train, BgpsConfig};
use linkswim::swimmer::SwimmerKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{load_with_overrides, RunConfig};
use crate::exit::UsageError;
use crate::{out_root, ConfigArgs};

pub const RESULTS_CSV_HEADER: &str = "method,action_range,task,swimmer,seeds,failed,mean_eval_reward";
const RESULT_FILE: &str = "result.json";

#[derive(Args)]
pub struct CompareArgs {
    /// TOML matrix with `methods`, `action_ranges`, `tasks`, `swimmers` and
    /// `seeds`; omitted keys take the full default table.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Seeds, e.g. `0,1,2`; overrides the matrix.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Training budget per cell; overrides `ppo.total_steps`.
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Comparison directory; defaults to `<out root>/compare`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base configuration shared by every cell.
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The geometric baseline alone, no learning.
    Bfg,
    /// Plain policy search over the full joint-speed range, no baseline.
    Ppo,
    /// Residual on top of the baseline with a bounded range.
    Bgps,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Bfg => "BFG",
            Method::Ppo => "PPO",
            Method::Bgps => "BGPS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Matrix {
    pub methods: Vec<Method>,
    pub action_ranges: Vec<f64>,
    pub tasks: Vec<RewardMode>,
    pub swimmers: Vec<SwimmerKind>,
    pub seeds: Vec<u64>,
}

impl Default for Matrix {
    fn default() -> Self {
        Self {
            methods: vec![Method::Bfg, Method::Ppo, Method::Bgps],
            action_ranges: vec![0.6, 0.3, 0.2, 0.15, 0.1],
            tasks: vec![RewardMode::Distance, RewardMode::Energy],
            swimmers: vec![SwimmerKind::LowRe, SwimmerKind::HighRe],
            seeds: vec![0],
        }
    }
}

/// One column of the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub method: Method,
    pub action_range: Option<f64>,
}

impl Column {
    fn label(&self) -> String {
        match self.action_range {
            Some(d) => format!("{}({d})", self.method.label()),
            None => self.method.label().to_string(),
        }
    }
}

impl Matrix {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.tasks.is_empty() || self.swimmers.is_empty() || self.seeds.is_empty() {
            return Err(UsageError("matrix needs at least one method, task, swimmer and seed".into()).into());
        }
        if self.methods.contains(&Method::Bgps) && self.action_ranges.is_empty() {
            return Err(UsageError("BGPS cells need at least one action range".into()).into());
        }
        Ok(())
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut out = Vec::new();
        for &method in &self.methods {
            if method == Method::Bgps {
                out.extend(self.action_ranges.iter().map(|&d| Column { method, action_range: Some(d) }));
            } else {
                out.push(Column { method, action_range: None });
            }
        }
        out
    }
}

/// Resolved configuration of one cell. BFG cells ignore the seed.
pub fn cell_config(base: &RunConfig, col: Column, task: RewardMode, swimmer: SwimmerKind, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.out_dir = None;
    cfg.env.swimmer = swimmer;
    cfg.env.reward_mode = task;
    match col.method {
        Method::Bfg => {
            cfg.bgps = BgpsConfig { action_range: 0.0, use_baseline: true };
            cfg.ppo = Default::default();
        }
        Method::Ppo => {
            cfg.bgps = BgpsConfig { action_range: cfg.env.max_joint_speed, use_baseline: false };
            cfg.ppo.seed = seed;
        }
        Method::Bgps => {
            cfg.bgps = BgpsConfig { action_range: col.action_range.unwrap_or(0.0), use_baseline: true };
            cfg.ppo.seed = seed;
        }
    }
    cfg
}

pub fn cell_key(method: Method, cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(method.label().as_bytes());
    h.update(b"\n");
    h.update(cfg.to_toml().as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub eval_reward: f64,
    pub best_eval: Option<f64>,
    pub env_steps: usize,
}

fn run_cell(method: Method, cfg: &RunConfig, dir: &Path) -> Result<CellResult> {
    let result_path = dir.join(RESULT_FILE);
    if let Ok(text) = std::fs::read_to_string(&result_path) {
        if let Ok(r) = serde_json::from_str(&text) {
            return Ok(r);
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut echoed = cfg.clone();
    echoed.out_dir = Some(dir.to_path_buf());
    echoed.echo(dir)?;
    let result = match method {
        Method::Bfg => {
            let ro = rollout(baseline_policy, &cfg.env)?;
            CellResult { eval_reward: ro.summary.total_reward, best_eval: None, env_steps: 0 }
        }
        Method::Ppo | Method::Bgps => {
            let out = train(&cfg.env, &cfg.bgps, &cfg.ppo, Some(dir))?;
            CellResult { eval_reward: out.final_eval, best_eval: out.best_eval.map(|e| e.reward), env_steps: out.env_steps }
        }
    };
    let json = serde_json::to_string_pretty(&result).expect("cell result serialises");
    write_atomic(&result_path, json.as_bytes())?;
    Ok(result)
}

/// Aggregate of one table entry over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub column: Column,
    pub task: RewardMode,
    pub swimmer: SwimmerKind,
    pub rewards: Vec<f64>,
    pub failed: usize,
}

impl Entry {
    pub fn mean(&self) -> Option<f64> {
        (!self.rewards.is_empty()).then(|| self.rewards.iter().sum::<f64>() / self.rewards.len() as f64)
    }
}

pub fn results_csv(entries: &[Entry]) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.column.method.label(),
            e.column.action_range.map_or(String::new(), |d| d.to_string()),
            e.task,
            e.swimmer,
            e.rewards.len(),
            e.failed,
            e.mean().map_or("failed".to_string(), |m| m.to_string())
        );
    }
    out
}

/// Rows are (task, swimmer), columns are methods.
pub fn results_table(columns: &[Column], entries: &[Entry]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["task".to_string(), "swimmer".to_string()];
    header.extend(columns.iter().map(Column::label));
    rows.push(header);
    let mut keys: Vec<(RewardMode, SwimmerKind)> = Vec::new();
    for e in entries {
        if !keys.contains(&(e.task, e.swimmer)) {
            keys.push((e.task, e.swimmer));
        }
    }
    for (task, swimmer) in keys {
        let mut row = vec![task.to_string(), swimmer.to_string()];
        for c in columns {
            let cell = entries
                .iter()
                .find(|e| e.task == task && e.swimmer == swimmer && e.column == *c)
                .map_or("-".to_string(), |e| match e.mean() {
                    Some(m) if e.failed == 0 => format!("{m:.4}"),
                    Some(m) => format!("{m:.4}*"),
                    None => "failed".to_string(),
                });
            row.push(cell);
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (s, w))| if k < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn cmd_compare(a: CompareArgs) -> Result<()> {
    let mut matrix: Matrix = match &a.matrix {
        Some(p) => load_with_overrides(Some(p), &[])?,
        None => Matrix::default(),
    };
    if let Some(seeds) = a.seed {
        matrix.seeds = seeds;
    }
    matrix.validate()?;
    let mut base = a.config.load()?;
    if let Some(n) = a.total_steps {
        base.ppo.total_steps = n;
    }
    base.validate()?;
    let dir = a.out.unwrap_or_else(|| out_root().join("compare"));
    let columns = matrix.columns();

    let mut entries = Vec::new();
    let mut failures = 0;
    for &task in &matrix.tasks {
        for &swimmer in &matrix.swimmers {
            for &column in &columns {
                let seeds: &[u64] = if column.method == Method::Bfg { &matrix.seeds[..1] } else { &matrix.seeds };
                let mut entry = Entry { column, task, swimmer, rewards: Vec::new(), failed: 0 };
                for &seed in seeds {
                    let cfg = cell_config(&base, column, task, swimmer, seed);
                    let cell_dir = dir.join("cells").join(cell_key(column.method, &cfg));
                    match run_cell(column.method, &cfg, &cell_dir) {
                        Ok(r) => {
                            eprintln!("{} {task} {swimmer} seed {seed}: {}", column.label(), r.eval_reward);
                            entry.rewards.push(r.eval_reward);
                        }
                        Err(e) => {
                            eprintln!("{} {task} {swimmer} seed {seed}: failed: {e:#}", column.label());
                            entry.failed += 1;
                        }
                    }
                }
                failures += entry.failed;
                entries.push(entry);
            }
        }
    }

    let table = results_table(&columns, &entries);
    write_atomic(&dir.join("results.csv"), results_csv(&entries).as_bytes())?;
    write_atomic(&dir.join("results.txt"), table.as_bytes())?;
    print!("{table}");
    if failures > 0 {
        return Err(anyhow!("{failures} cell(s) failed; see the table"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_columns_follow_the_table_layout() {
        let labels: Vec<String> = Matrix::default().columns().iter().map(Column::label).collect();
        assert_eq!(
            labels,
            ["BFG", "PPO", "BGPS(0.6)", "BGPS(0.3)", "BGPS(0.2)", "BGPS(0.15)", "BGPS(0.1)"]
        );
    }

    #[test]
    fn keys_depend_on_the_configuration_only() {
        let base = RunConfig::default();
        let col = Column { method: Method::Bgps, action_range: Some(0.15) };
        let a = cell_config(&base, col, RewardMode::Distance, SwimmerKind::LowRe, 0);
        let b = cell_config(&base, col, RewardMode::Distance, SwimmerKind::LowRe, 1);
        assert_eq!(cell_key(Method::Bgps, &a), cell_key(Method::Bgps, &a.clone()));
        assert_ne!(cell_key(Method::Bgps, &a), cell_key(Method::Bgps, &b));
        let bfg0 = cell_config(&base, Column { method: Method::Bfg, action_range: None }, RewardMode::Distance, SwimmerKind::LowRe, 0);
        let bfg1 = cell_config(&base, Column { method: Method::Bfg, action_range: None }, RewardMode::Distance, SwimmerKind::LowRe, 5);
        assert_eq!(cell_key(Method::Bfg, &bfg0), cell_key(Method::Bfg, &bfg1));
    }

    #[test]
    fn ppo_cells_use_the_full_range_without_baseline() {
        let base = RunConfig::default();
        let c = cell_config(&base, Column { method: Method::Ppo, action_range: None }, RewardMode::Energy, SwimmerKind::HighRe, 2);
        assert!(!c.bgps.use_baseline);
        assert_eq!(c.bgps.action_range, base.env.max_joint_speed);
        assert_eq!(c.ppo.seed, 2);
    }

    #[test]
    fn table_marks_failures() {
        let cols = [Column { method: Method::Bfg, action_range: None }, Column { method: Method::Bgps, action_range: Some(0.1) }];
        let entries = vec![
            Entry { column: cols[0], task: RewardMode::Distance, swimmer: SwimmerKind::LowRe, rewards: vec![0.05], failed: 0 },
            Entry { column: cols[1], task: RewardMode::Distance, swimmer: SwimmerKind::LowRe, rewards: vec![], failed: 1 },
        ];
        let t = results_table(&cols, &entries);
        assert!(t.contains("0.0500"), "{t}");
        assert!(t.contains("failed"), "{t}");
        let csv = results_csv(&entries);
        assert!(csv.starts_with(RESULTS_CSV_HEADER));
        assert!(csv.lines().nth(2).unwrap().ends_with(",0,1,failed"), "{csv}");
    }
}
