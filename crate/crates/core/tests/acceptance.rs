//! End-to-end acceptance checks, one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::time::{Duration, Instant};

use linkswim::env::{
    baseline_policy, evaluate_gait, rollout, Action, EnvConfig, GaitWaveform, RewardMode,
};
use linkswim::export::{export_field, ExportPaths, SvgStyle};
use linkswim::field::{exterior_derivative_field, line_integral, surface_integral, GridSpec, ScalarField};
use linkswim::rl::ppo::{flat_params, loss_and_grad, num_params, set_flat_params, Sample};
use linkswim::rl::{
    gae, train, BgpsConfig, Environment, GaussianPolicy, Mlp, PointMass, PpoConfig, Trainer,
};
use linkswim::swimmer::{
    ellipse_effective_inertia, ConnectionModel, ConnectionRow, HighReParams, LowReParams, Shape, SwimmerKind,
    SwimmerModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("model-oracle equivalence", model_oracle),
        ("stokes equivalence", stokes),
        ("zero, reversal and pacing", zero_reversal_pacing),
        ("field sign structure", field_signs),
        ("rl stack correctness", rl_stack),
        ("zero-range identity", zero_range_identity),
        ("desk-scale ordering", desk_scale_ordering),
        ("baseline positivity", baseline_positivity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| outcome(false, "panicked".to_string()));
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {} ({:.1} s)", result.detail, start.elapsed().as_secs_f64());
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// Forward-mode dual numbers: value and derivative along one direction.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
    fn sin(self) -> Self {
        Self::new(self.v.sin(), self.d * self.v.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.v.cos(), -self.d * self.v.sin())
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, k: f64) -> Dual {
        Dual::new(self.v * k, self.d * k)
    }
}

/// Per-link (centre x, centre y, heading) with time derivatives, for the base
/// at the world origin moving with body velocity `xi` while the joints move
/// at `alpha_dot`. Built from the chain geometry directly: each joint sits at
/// the trailing tip of the previous link.
fn link_motion(alpha: [f64; 2], xi: [f64; 3], alpha_dot: [f64; 2], len: f64) -> [[Dual; 3]; 3] {
    let h = 0.5 * len;
    let x1 = Dual::new(0.0, xi[0]);
    let y1 = Dual::new(0.0, xi[1]);
    let p1 = Dual::new(0.0, xi[2]);
    let p2 = p1 + Dual::new(alpha[0], alpha_dot[0]);
    let p3 = p2 + Dual::new(alpha[1], alpha_dot[1]);
    let (jx1, jy1) = (x1 - p1.cos() * h, y1 - p1.sin() * h);
    let (x2, y2) = (jx1 - p2.cos() * h, jy1 - p2.sin() * h);
    let (jx2, jy2) = (x2 - p2.cos() * h, y2 - p2.sin() * h);
    let (x3, y3) = (jx2 - p3.cos() * h, jy2 - p3.sin() * h);
    [[x1, y1, p1], [x2, y2, p2], [x3, y3, p3]]
}

/// Sum over links of a link-frame covector `f(v_link)` moved to the base
/// frame (force rotated, moment taken about the base origin).
fn assemble(links: &[[Dual; 3]; 3], f: impl Fn([f64; 3]) -> [f64; 3]) -> [f64; 3] {
    let mut total = [0.0; 3];
    for l in links {
        let (s, c) = l[2].v.sin_cos();
        // world velocity of the link centre expressed in the link frame
        let v = [c * l[0].d + s * l[1].d, -s * l[0].d + c * l[1].d, l[2].d];
        let w = f(v);
        let fx = c * w[0] - s * w[1];
        let fy = s * w[0] + c * w[1];
        total[0] += fx;
        total[1] += fy;
        total[2] += w[2] + l[0].v * fy - l[1].v * fx;
    }
    total
}

fn model_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lo = LowReParams::default();
    let hi = HighReParams::default();
    let inertia = ellipse_effective_inertia(&hi);
    let drag = [
        lo.drag_constant * lo.link_length,
        lo.lateral_ratio * lo.drag_constant * lo.link_length,
        lo.lateral_ratio * lo.drag_constant * lo.link_length.powi(3) / 12.0,
    ];
    let mut worst = [0.0f64; 2];
    let mut errors = 0;
    for _ in 0..1000 {
        let alpha = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let adot = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        for (k, model) in [SwimmerModel::LowRe(lo), SwimmerModel::HighRe(hi)].iter().enumerate() {
            let Ok(conn) = model.connection(Shape::new(alpha[0], alpha[1])) else {
                errors += 1;
                continue;
            };
            let xi = conn.body_velocity(nalgebra::Vector2::new(adot[0], adot[1]));
            let xi = [xi.xi_x, xi.xi_y, xi.xi_theta];
            let links = link_motion(alpha, xi, adot, model.link_length());
            let r = if k == 0 {
                assemble(&links, |v| [-drag[0] * v[0], -drag[1] * v[1], -drag[2] * v[2]])
            } else {
                assemble(&links, |v| {
                    let p = inertia * nalgebra::Vector3::new(v[0], v[1], v[2]);
                    [p[0], p[1], p[2]]
                })
            };
            worst[k] = worst[k].max(r.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
    }
    let elapsed = start.elapsed();
    let pass = errors == 0 && worst[0] < 1e-9 && worst[1] < 1e-9 && within(elapsed, 10.0);
    outcome(
        pass,
        format!(
            "max |force residual| {:.2e}, max |momentum residual| {:.2e} (< 1e-9), {errors} singular samples",
            worst[0], worst[1]
        ),
    )
}

fn random_ellipse(rng: &mut ChaCha8Rng) -> GaitWaveform {
    loop {
        let offsets = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let amps = [
            rng.random_range(0.2..2.0 - f64::abs(offsets[0])),
            rng.random_range(0.2..2.0 - f64::abs(offsets[1])),
        ];
        let lag: f64 = rng.random_range(-PI..PI);
        if lag.sin().abs() < 0.3 {
            continue;
        }
        return GaitWaveform::new(amps, 1.0, [0.0, lag], offsets);
    }
}

fn stokes() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::new(-2.0, 2.0, 256).unwrap();
    let mut worst_si = 0.0f64;
    let mut worst_sim = 0.0f64;
    for kind in [SwimmerKind::LowRe, SwimmerKind::HighRe] {
        let model = SwimmerModel::default_for(kind);
        let field = exterior_derivative_field(&model, &grid, ConnectionRow::Theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let w = random_ellipse(&mut rng);
            let lp = w.joint_loop(256).unwrap();
            let li = line_integral(&model, &lp).unwrap()[2];
            let si = surface_integral(&field, &lp).unwrap();
            let sim = evaluate_gait(&w, &model, 1).unwrap().dtheta;
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-6);
            worst_si = worst_si.max(rel(si, li));
            worst_sim = worst_sim.max(rel(sim, li)).max(rel(sim, si));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_si < 0.02 && worst_sim < 0.01 && within(elapsed, 120.0);
    outcome(
        pass,
        format!("40 loops: line vs surface worst {:.3}% (< 2%), simulated dtheta worst {:.3}% (< 1%)", 100.0 * worst_si, 100.0 * worst_sim),
    )
}

fn zero_reversal_pacing() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let asym = GaitWaveform::new([0.5, 0.3], 1.0, [0.0, 1.2], [0.3, -0.2]);
    for kind in [SwimmerKind::LowRe, SwimmerKind::HighRe] {
        let model = SwimmerModel::default_for(kind);
        let still = GaitWaveform::new([0.0, 0.0], 1.0, [0.0, 0.0], [0.7, -0.4]);
        let d = evaluate_gait(&still, &model, 1).unwrap();
        let env = EnvConfig::for_swimmer(kind);
        let ro = rollout(|_| Action::ZERO, &env).unwrap();
        let zero_ok = d.dx == 0.0 && d.dy == 0.0 && d.dtheta == 0.0 && ro.summary.dx == 0.0 && ro.summary.dtheta == 0.0;

        let lp = asym.joint_loop(256).unwrap();
        let fwd = line_integral(&model, &lp).unwrap()[2];
        let back = line_integral(&model, &lp.reversed()).unwrap()[2];
        let sim_fwd = evaluate_gait(&asym, &model, 1).unwrap().dtheta;
        let sim_back = evaluate_gait(&asym.reversed(), &model, 1).unwrap().dtheta;
        let sim_rev_err = (sim_fwd + sim_back).abs() / sim_fwd.abs();
        let reversal_ok = back == -fwd && sim_rev_err < 1e-9;

        // 2x rescales time exactly in binary, so 1.7x is checked as well
        let slow = evaluate_gait(&asym, &model, 1).unwrap();
        let norm = |a: f64, b: f64, c: f64| (a * a + b * b + c * c).sqrt();
        let pace_err = [2.0, 1.7]
            .iter()
            .map(|&f| {
                let fast = evaluate_gait(&asym.with_frequency(f), &model, 1).unwrap();
                norm(fast.dx - slow.dx, fast.dy - slow.dy, fast.dtheta - slow.dtheta) / norm(slow.dx, slow.dy, slow.dtheta)
            })
            .fold(0.0f64, f64::max);
        let pacing_ok = pace_err < 0.005;

        pass &= zero_ok && reversal_ok && pacing_ok;
        notes.push(format!(
            "{kind}: zero {}, line reversal exact {}, simulated reversal rel {:.1e}, pacing rel {:.1e}",
            if zero_ok { "exact" } else { "NONZERO" },
            back == -fwd,
            sim_rev_err,
            pace_err
        ));
    }
    outcome(pass, notes.join("; "))
}

/// Probe points fixed after the first validated export of both fields.
const NEGATIVE_PROBES: [(f64, f64); 4] = [(0.0, 0.0), (-2.0, -2.0), (1.5, 2.0), (2.0, 2.0)];
const POSITIVE_PROBES: [(f64, f64); 4] = [(-2.0, 2.0), (2.0, -2.0), (3.0, 3.0), (-3.0, -3.0)];

/// Fraction of nodes where the field exceeds half its peak magnitude.
fn concentration(field: &ScalarField) -> f64 {
    let peak = field.max_abs();
    let vals: Vec<f64> = field.values.iter().flatten().copied().collect();
    vals.iter().filter(|v| v.abs() > 0.5 * peak).count() as f64 / vals.len() as f64
}

fn field_signs() -> Outcome {
    let grid = GridSpec::new(-3.0, 3.0, 128).unwrap();
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-fields");
    let mut pass = true;
    let mut notes = Vec::new();
    let mut conc = Vec::new();
    for kind in [SwimmerKind::LowRe, SwimmerKind::HighRe] {
        let model = SwimmerModel::default_for(kind);
        let field = exterior_derivative_field(&model, &grid, ConnectionRow::X).unwrap();
        let meta = export_field(&field, &ExportPaths::with_stem(&out, &format!("{kind}-dx")), &SvgStyle::default()).unwrap();
        let sign_at = |p: (f64, f64)| field.sample(Shape::new(p.0, p.1)).unwrap_or(f64::NAN);
        let signs_ok = NEGATIVE_PROBES.iter().all(|&p| sign_at(p) < 0.0)
            && POSITIVE_PROBES.iter().all(|&p| sign_at(p) > 0.0);
        let c = concentration(&field);
        conc.push(c);
        pass &= signs_ok && meta.contour_paths >= 2 && meta.missing == 0;
        notes.push(format!(
            "{kind}: probes {}, zero contours {}, high-magnitude fraction {:.3}",
            if signs_ok { "ok" } else { "WRONG" },
            meta.contour_paths,
            c
        ));
    }
    pass &= conc[1] < conc[0];
    notes.push(format!("svg in {}", out.display()));
    outcome(pass, notes.join("; "))
}

fn mlp_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let net = Mlp::init(&[3, 16, 16, 2], 1.0, rng).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let loss = |m: &Mlp| {
            let y = m.predict(&x).unwrap();
            c[0] * y[0] + c[1] * y[1]
        };
        let cache = net.forward(&x).unwrap();
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&cache, &c, &mut grad).unwrap();
        let mut probe = net.clone();
        let h = 1e-6;
        for k in 0..grad.len() {
            let base = probe.params()[k];
            probe.params_mut()[k] = base + h;
            let up = loss(&probe);
            probe.params_mut()[k] = base - h;
            let down = loss(&probe);
            probe.params_mut()[k] = base;
            let numeric = (up - down) / (2.0 * h);
            let scale = grad[k].abs().max(numeric.abs());
            if scale > 1e-6 {
                worst = worst.max((grad[k] - numeric).abs() / scale);
            }
        }
    }
    worst
}

fn ppo_gradient_error(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let policy = GaussianPolicy::init(3, 2, &[16, 16], -0.5, rng).unwrap();
    let mut policy = policy;
    // a non-trivial mean so ratios move away from 1
    for p in policy.mean.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let value = Mlp::init(&[3, 16, 16, 1], 1.0, rng).unwrap();
    let n = 32;
    let obs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let acts: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let olds: Vec<f64> = (0..n)
        .map(|i| {
            let mu = policy.mean_action(&obs[i]).unwrap();
            linkswim::rl::policy::log_prob(&mu, &policy.log_std, &acts[i]) + rng.random_range(-0.6..0.6)
        })
        .collect();
    let batch: Vec<Sample> = (0..n)
        .map(|i| Sample {
            obs: &obs[i],
            action: &acts[i],
            old_log_prob: olds[i],
            advantage: rng.random_range(-1.5..1.5),
            ret: rng.random_range(-1.0..1.0),
        })
        .collect();
    let cfg = PpoConfig { entropy_coef: 0.01, ..Default::default() };
    let mut grad = vec![0.0; num_params(&policy, &value)];
    let stats = loss_and_grad(&policy, &value, &batch, &cfg, &mut grad).unwrap();
    let base = flat_params(&policy, &value);
    let (mut p, mut v) = (policy.clone(), value.clone());
    let mut scratch = vec![0.0; base.len()];
    let mut probe = base.clone();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        let mut at = |x: f64| {
            probe[k] = x;
            set_flat_params(&mut p, &mut v, &probe);
            loss_and_grad(&p, &v, &batch, &cfg, &mut scratch).unwrap().total
        };
        let numeric = (at(base[k] + h) - at(base[k] - h)) / (2.0 * h);
        probe[k] = base[k];
        let scale = grad[k].abs().max(numeric.abs());
        if scale > 1e-6 {
            worst = worst.max((grad[k] - numeric).abs() / scale);
        }
    }
    (worst, stats.clip_fraction)
}

/// Direct double sum of discounted TD residuals, cut at episode ends.
fn gae_brute(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { last };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for s in t..n {
                let cont = if dones[s] { 0.0 } else { 1.0 };
                let delta = rewards[s] + gamma * cont * next_value(s) - values[s];
                sum += weight * delta;
                if dones[s] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}

fn point_mass_score() -> (f64, f64) {
    let cfg = PpoConfig { total_steps: 100_000, seed: 0, ..Default::default() };
    let mut trainer = Trainer::new(PointMass::new(), cfg, serde_json::Value::Null, None).unwrap();
    trainer.run().unwrap();
    let policy = trainer.policy().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut learned, mut optimal) = (0.0, 0.0);
    for _ in 0..1000 {
        let mut env = PointMass::new();
        env.reset(&mut rng).unwrap();
        let mut opt = env.clone();
        loop {
            let fb = env.step(&policy.mean_action(&env.observation()).unwrap()).unwrap();
            learned += fb.reward;
            if fb.done {
                break;
            }
        }
        loop {
            let fb = opt.step(&[PointMass::optimal_action(opt.observation()[0])]).unwrap();
            optimal += fb.reward;
            if fb.done {
                break;
            }
        }
    }
    (learned / 1000.0, optimal / 1000.0)
}

fn rl_stack() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mlp_err = mlp_gradient_error(&mut rng);
    let (ppo_err, clip_fraction) = ppo_gradient_error(&mut rng);

    let mut gae_err = 0.0f64;
    for _ in 0..20 {
        let n = 64;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let last = rng.random_range(-1.0..1.0);
        let (adv, ret) = gae(&rewards, &values, &dones, last, 0.99, 0.95).unwrap();
        let brute = gae_brute(&rewards, &values, &dones, last, 0.99, 0.95);
        for t in 0..n {
            gae_err = gae_err.max((adv[t] - brute[t]).abs()).max((ret[t] - brute[t] - values[t]).abs());
        }
    }

    let start = Instant::now();
    let (learned, optimal) = point_mass_score();
    let pm_time = start.elapsed();
    let ratio = learned / optimal;
    let pass = mlp_err < 1e-4
        && ppo_err < 1e-4
        && clip_fraction > 0.0
        && gae_err < 1e-12
        && ratio >= 0.9
        && within(pm_time, 300.0);
    outcome(
        pass,
        format!(
            "mlp grad rel {mlp_err:.1e}, ppo grad rel {ppo_err:.1e} (clipped {:.0}%), gae abs {gae_err:.1e}, point mass {:.1}% of optimal in {:.0} s",
            100.0 * clip_fraction,
            100.0 * ratio,
            pm_time.as_secs_f64()
        ),
    )
}

fn zero_range_identity() -> Outcome {
    let env = EnvConfig::default();
    let baseline = rollout(baseline_policy, &env).unwrap().summary.total_reward;
    let ppo = PpoConfig { total_steps: 50_000, ..Default::default() };
    let out = train(&env, &BgpsConfig { action_range: 0.0, use_baseline: true }, &ppo, None).unwrap();
    let evals_ok = out.evals.iter().all(|e| e.reward == baseline);
    outcome(
        out.final_eval == baseline && evals_ok,
        format!("after {} steps eval {} vs baseline {} (all {} evals identical: {evals_ok})", out.env_steps, out.final_eval, baseline, out.evals.len()),
    )
}

const SWEEP_RANGES: [f64; 5] = [0.1, 0.15, 0.2, 0.3, 0.6];
const SWEEP_SEEDS: [u64; 3] = [0, 1, 2];

fn desk_scale_ordering() -> Outcome {
    let start = Instant::now();
    let env = EnvConfig { reward_mode: RewardMode::Distance, ..EnvConfig::for_swimmer(SwimmerKind::LowRe) };
    let baseline = rollout(baseline_policy, &env).unwrap().summary.total_reward;
    let jobs: Vec<(u64, f64)> = SWEEP_SEEDS.iter().flat_map(|&s| SWEEP_RANGES.iter().map(move |&d| (s, d))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(&(seed, delta)) = jobs.get(k) else { break };
                let ppo = PpoConfig { seed, total_steps: 300_000, ..Default::default() };
                let out = train(&env, &BgpsConfig { action_range: delta, use_baseline: true }, &ppo, None).unwrap();
                let best = out.best_eval.map_or(f64::NAN, |e| e.reward);
                results.lock().unwrap().push((seed, delta, out.final_eval, best));
            });
        }
    });
    let results = results.into_inner().unwrap();
    let get = |seed: u64, delta: f64| *results.iter().find(|r| r.0 == seed && r.1 == delta).unwrap();

    let mut a_wins = 0;
    let mut b_wins = 0;
    let mut rows = Vec::new();
    for &seed in &SWEEP_SEEDS {
        if get(seed, 0.15).2 >= baseline {
            a_wins += 1;
        }
        let best = |ds: &[f64]| ds.iter().map(|&d| get(seed, d).3).fold(f64::NEG_INFINITY, f64::max);
        let small = best(&[0.1, 0.15, 0.2]);
        let large = best(&[0.3, 0.6]);
        if small > large {
            b_wins += 1;
        }
        let finals: Vec<String> = SWEEP_RANGES.iter().map(|&d| format!("{d}:{:.4}/{:.4}", get(seed, d).2, get(seed, d).3)).collect();
        rows.push(format!("seed {seed} final/best {}", finals.join(" ")));
    }
    let elapsed = start.elapsed();
    let pass = a_wins >= 2 && b_wins >= 2 && within(elapsed, 2.0 * 3600.0);
    outcome(
        pass,
        format!(
            "(a) BGPS(0.15) >= baseline {baseline:.5} in {a_wins}/3 seeds; (b) best-of-run small > large in {b_wins}/3 seeds; {}",
            rows.join("; ")
        ),
    )
}

fn baseline_positivity() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for kind in [SwimmerKind::LowRe, SwimmerKind::HighRe] {
        let r = rollout(baseline_policy, &EnvConfig::for_swimmer(kind)).unwrap().summary.total_reward;
        pass &= r > 0.0;
        notes.push(format!("{kind} {r:.5}"));
    }
    outcome(pass, format!("baseline distance reward {}", notes.join(", ")))
}
