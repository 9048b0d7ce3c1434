use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn linkswim(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkswim"))
        .args(args)
        .env("LINKSWIM_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value printed on the line starting with `key `.
fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .and_then(|r| r.split_whitespace().next())
        .unwrap_or_else(|| panic!("no '{key}' in:\n{out}"))
        .parse()
        .unwrap()
}

const SMALL: [&str; 14] = [
    "--set",
    "ppo.steps_per_update=256",
    "--set",
    "ppo.minibatch_size=64",
    "--set",
    "ppo.epochs_per_update=2",
    "--set",
    "ppo.hidden=[8, 8]",
    "--set",
    "ppo.eval_every=512",
    "--set",
    "ppo.checkpoint_every=512",
    "--set",
    "env.episode_steps=100",
];

fn train_small(dir: &Path, root: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--quiet", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    linkswim(&args, root)
}

#[test]
fn field_writes_resolution_squared_rows() {
    let tmp = TempDir::new().unwrap();
    let o = linkswim(&["field", "--swimmer", "low-re", "--row", "x", "--resolution", "16"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("fields/low-re-dx.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
    assert!(tmp.path().join("fields/low-re-dx.svg").exists());
    assert!(tmp.path().join("fields/low-re-dx.meta.json").exists());
}

#[test]
fn coarse_grid_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = linkswim(&["field", "--resolution", "4"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!tmp.path().join("fields").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[env]\ndt = 0.04\nepisode_step = 10\n").unwrap();
    let o = linkswim(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("episode_step"), "{}", stderr(&o));
}

#[test]
fn bad_flags_and_missing_files() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(linkswim(&["simulate", "--nope"], tmp.path()).status.code(), Some(1));
    assert_eq!(linkswim(&["field", "--swimmer", "medium-re"], tmp.path()).status.code(), Some(1));
    let o = linkswim(&["evaluate", tmp.path().join("missing.json").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn simulate_zero_and_baseline() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("zero.csv");
    let o = linkswim(&["simulate", "--policy", "zero", "--out", csv.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "dx"), 0.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 501);

    let o = linkswim(&["simulate", "--policy", "baseline", "--swimmer", "low-re", "--steps", "500"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value(&stdout(&o), "dx") > 0.0);
    assert!(tmp.path().join("rollout.csv").exists());
}

#[test]
fn gait_reports_a_closed_loop_displacement() {
    let tmp = TempDir::new().unwrap();
    let o = linkswim(&["gait", "--swimmer", "high-re"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(value(&out, "dx") > 0.0);
    assert!(value(&out, "dtheta").abs() < 1e-9);
}

#[test]
fn zero_range_training_reproduces_the_baseline() {
    let tmp = TempDir::new().unwrap();
    let base = linkswim(&["simulate", "--steps", "100"], tmp.path());
    let baseline = value(&stdout(&base), "total_reward");
    let run = tmp.path().join("d0");
    let o = train_small(&run, tmp.path(), &["--total-steps", "512", "--action-range", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "final_eval"), baseline);
    for f in ["config.toml", "curve.csv", "eval.csv", "checkpoint.json", "best.json", "final.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
}

#[test]
fn same_seed_same_curve_and_echo_reproduces() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(train_small(&a, tmp.path(), &["--total-steps", "512", "--seed", "3"]).status.success());
    assert!(train_small(&b, tmp.path(), &["--total-steps", "512", "--seed", "3"]).status.success());
    let curve = |d: &Path| std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert_eq!(curve(&a), curve(&b));

    let c = tmp.path().join("c");
    let echoed = a.join("config.toml");
    let o = linkswim(
        &["train", "--quiet", "--config", echoed.to_str().unwrap(), "--out", c.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(curve(&a), curve(&c));
    assert_eq!(
        std::fs::read_to_string(a.join("final.json")).unwrap().replace(a.to_str().unwrap(), ""),
        std::fs::read_to_string(c.join("final.json")).unwrap().replace(c.to_str().unwrap(), "")
    );
}

#[test]
fn resume_continues_to_the_same_curve() {
    let tmp = TempDir::new().unwrap();
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    assert!(train_small(&full, tmp.path(), &["--total-steps", "1024"]).status.success());
    assert!(train_small(&part, tmp.path(), &["--total-steps", "512"]).status.success());
    // extend the stopped run's budget, as if it had been interrupted halfway
    let ck_path = part.join("checkpoint.json");
    let mut ck: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ck_path).unwrap()).unwrap();
    assert_eq!(ck["env_steps"], 512);
    ck["config"]["ppo"]["total_steps"] = 1024.into();
    std::fs::write(&ck_path, ck.to_string()).unwrap();
    let o = linkswim(&["train", "--quiet", "--resume", part.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("resuming"));
    let read = |d: &Path, f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read(&full, "curve.csv"), read(&part, "curve.csv"));
    assert_eq!(read(&full, "eval.csv"), read(&part, "eval.csv"));
}

#[test]
fn checkpoint_schema_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("r");
    assert!(train_small(&run, tmp.path(), &["--total-steps", "256"]).status.success());
    let path = run.join("final.json");
    let o = linkswim(&["evaluate", path.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = linkswim(&["simulate", "--policy", path.to_str().unwrap(), "--steps", "100"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut ck: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    ck["schema_version"] = 99.into();
    std::fs::write(&path, ck.to_string()).unwrap();
    let o = linkswim(&["simulate", "--policy", path.to_str().unwrap()], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));
}

#[test]
fn bfg_only_compare_runs_no_training_and_caches() {
    let tmp = TempDir::new().unwrap();
    let matrix = tmp.path().join("m.toml");
    std::fs::write(&matrix, "methods = [\"bfg\"]\nseeds = [0, 1]\n").unwrap();
    let out = tmp.path().join("cmp");
    let args = ["compare", "--matrix", matrix.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = linkswim(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("BFG"));
    assert_eq!(table.lines().count(), 1 + 4);
    let cells: Vec<_> = std::fs::read_dir(out.join("cells")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(cells.len(), 4);
    for c in &cells {
        assert!(c.join("result.json").exists());
        assert!(!c.join("curve.csv").exists());
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);

    let again = linkswim(&args, tmp.path());
    assert_eq!(stdout(&again), table);
}

#[test]
fn compare_trains_bgps_cells() {
    let tmp = TempDir::new().unwrap();
    let matrix = tmp.path().join("m.toml");
    std::fs::write(
        &matrix,
        "methods = [\"bfg\", \"bgps\"]\naction_ranges = [0.1]\ntasks = [\"distance\"]\nswimmers = [\"low-re\"]\n",
    )
    .unwrap();
    let out = tmp.path().join("cmp");
    let mut args = vec!["compare", "--matrix", matrix.to_str().unwrap(), "--out", out.to_str().unwrap(), "--total-steps", "256"];
    args.extend_from_slice(&SMALL);
    let o = linkswim(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("BGPS(0.1)"));
    let trained = std::fs::read_dir(out.join("cells"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().join("curve.csv").exists())
        .count();
    assert_eq!(trained, 1);
}
