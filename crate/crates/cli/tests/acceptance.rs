//! Acceptance criteria at their stated sizes and tolerances. Each criterion
//! prints one PASS/FAIL line; run with `--nocapture` to see them.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use ddw_core::integrator::simulate_controlled;
use ddw_core::lyapunov::{benettin_lambda, component_identity_residual, ergodic_lambda_n1, stationarity_ks, DEFAULT_RENORM_EVERY};
use ddw_core::quadrature::{closed_form_bound_n2, lambda_top_quad, sigma_star};
use ddw_core::stats::median;
use ddw_core::sync::{ensemble_diameter_seeds, pairwise_bound_check, seed_for, EnsembleSpec};
use ddw_core::{
    ControlSpec, IncrementSource, LyapunovEstimate64, McSpec64, SolverConfig64, StateVec64, SystemParams64, Verdict,
    VerdictRule,
};

type Check = Result<String, String>;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, title: &str, budget: Option<Duration>, run: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if let Some(b) = budget {
            if elapsed > b {
                passed = false;
                detail.push_str(&format!("; over budget {:.0?}", b));
            }
        }
        let line = format!(
            "criterion {id:>2} {} {title}: {detail} ({:.2?})",
            if passed { "PASS" } else { "FAIL" },
            elapsed
        );
        println!("{line}");
        self.lines.push((id, passed, line));
    }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sign_n1() -> Check {
    let lo = lambda_top_quad(1, 0.5, 1e-10).map_err(|e| e.to_string())?;
    let hi = lambda_top_quad(1, 2.0, 1e-10).map_err(|e| e.to_string())?;
    let margin = |r: &ddw_core::QuadratureResult64| r.value.abs() > 10.0 * (r.abs_error_estimate + r.tail_bound);
    ensure(
        lo.value > 0.0 && hi.value < 0.0 && margin(&lo) && margin(&hi),
        format!("lambda(0.5) = {:.6}, lambda(2) = {:.6}, errors {:.1e}/{:.1e}", lo.value, hi.value, lo.total_error(), hi.total_error()),
    )
}

fn sign_n_ge_2() -> Check {
    let mut worst = f64::NEG_INFINITY;
    for n in 2..=4 {
        for sigma in [0.3f64, 0.5, 1.0, 2.0, 4.0] {
            let r = lambda_top_quad(n, sigma, 1e-10).map_err(|e| e.to_string())?;
            if r.value.is_nan() || r.value >= 0.0 {
                return Err(format!("lambda({n}, {sigma}) = {}", r.value));
            }
            worst = worst.max(r.value);
        }
    }
    Ok(format!("15 cells negative, max {worst:.3e}"))
}

fn sigma_star_bracket() -> Check {
    let a = sigma_star(1e-6).map_err(|e| e.to_string())?;
    let b = sigma_star(1e-8).map_err(|e| e.to_string())?;
    let inside = 0.5 < a.lower && a.upper < 2.0 && a.width() <= 2e-6;
    let nested = a.lower <= b.lower && b.upper <= a.upper && b.width() <= 2e-8;
    ensure(inside && nested, format!("[{:.9}, {:.9}] contains [{:.10}, {:.10}]", a.lower, a.upper, b.lower, b.upper))
}

fn closed_form() -> Check {
    let mut worst = 0.0f64;
    for sigma in [0.5, 1.0, 2.0] {
        let c: f64 = closed_form_bound_n2(sigma, 1e-12).map_err(|e| e.to_string())?;
        let q = lambda_top_quad(2, sigma, 1e-12).map_err(|e| e.to_string())?.value;
        worst = worst.max(((c - q) / c).abs());
    }
    ensure(worst <= 1e-10, format!("max relative difference {worst:.2e}"))
}

struct McRun {
    exact: f64,
    ergodic: LyapunovEstimate64,
    benettin: LyapunovEstimate64,
}

fn mc_setup() -> (SystemParams64, SolverConfig64, McSpec64) {
    let p = SystemParams64::new(2, 1, 2.0).unwrap();
    let cfg = SolverConfig64::new(1e-3).unwrap();
    let mc = McSpec64::new(20_240_601, 1e4, 32).with_burn_in(1e3);
    (p, cfg, mc)
}

fn mc_run() -> Result<McRun, String> {
    let (p, cfg, mc) = mc_setup();
    let exact = lambda_top_quad(1, 2.0, 1e-10).map_err(|e| e.to_string())?.value;
    let ergodic = ergodic_lambda_n1(&p, &cfg, &mc, None).map_err(|e| e.to_string())?;
    let v0 = StateVec64::new(vec![1.0, 1.0]).unwrap();
    let benettin = benettin_lambda(&p, None, &v0, &cfg, &mc, DEFAULT_RENORM_EVERY).map_err(|e| e.to_string())?;
    Ok(McRun { exact, ergodic, benettin })
}

fn estimator_agreement(run: &Result<McRun, String>) -> Check {
    let r = run.as_ref().map_err(Clone::clone)?;
    let (e, b) = (&r.ergodic, &r.benettin);
    let combined = (e.stderr * e.stderr + b.stderr * b.stderr).sqrt();
    let ok = (e.value - r.exact).abs() <= 3.0 * e.stderr
        && (b.value - r.exact).abs() <= 3.0 * b.stderr
        && (e.value - b.value).abs() <= 3.0 * combined;
    ensure(
        ok,
        format!(
            "quad {:.5}, ergodic {:.5} +- {:.5}, benettin {:.5} +- {:.5}",
            r.exact, e.value, e.stderr, b.value, b.stderr
        ),
    )
}

fn gronwall(run: &Result<McRun, String>) -> Check {
    let b = &run.as_ref().map_err(Clone::clone)?.benettin;
    ensure(
        b.gronwall_violations == 0,
        format!("{} violations, max growth rate {:.4} per unit time", b.gronwall_violations, b.max_growth_rate),
    )
}

fn pairwise_bound() -> Check {
    let cfg = SolverConfig64::new(1e-3).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for sigma in [0.5, 2.0] {
        let p = SystemParams64::new(2, 1, sigma).unwrap();
        let r = pairwise_bound_check(&p, &cfg, 7, 1000).map_err(|e| e.to_string())?;
        ok &= r.max_at_half <= 4.1 && r.max_after_entry <= 4.2;
        parts.push(format!("sigma {sigma}: {:.4} at t=0.5, {:.4} after entry", r.max_at_half, r.max_after_entry));
    }
    ensure(ok, parts.join("; "))
}

fn controlled_paths() -> Check {
    let p = SystemParams64::new(3, 2, 0.7).unwrap();
    let t0 = 1.5f64.ln();
    let fine = SolverConfig64::new(1e-4).unwrap().with_stride(1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut in_m = || loop {
        let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if v[0] * v[0] + v[1] * v[1] <= 4.0 {
            return StateVec64::new(vec![v[0], v[1], 0.0]).unwrap();
        }
    };
    let mut worst_line = 0.0f64;
    let mut pairs = 0;
    while pairs < 10 {
        let (x, y) = (in_m(), in_m());
        if x.distance(&y) > 2.0 {
            continue;
        }
        let spec = ControlSpec::LineTo { from: x.clone(), to: y.clone(), t0 };
        let traj = simulate_controlled(&spec, &x, &p, &fine, t0).map_err(|e| e.to_string())?;
        worst_line = worst_line.max(StateVec64::new(traj.last().unwrap().to_vec()).unwrap().distance(&y));
        pairs += 1;
    }
    let dt = 1e-3;
    let cfg = SolverConfig64::new(dt).unwrap();
    let target = StateVec64::new(vec![2.0, 0.0, 0.0]).unwrap();
    let spec = ControlSpec::HoldAt { target: target.clone() };
    let mut worst_hold = 0.0f64;
    for radius in [1.0, 4.0] {
        for angle in [0.0f64, 1.0, 2.0, 3.0, 4.0, 5.0] {
            let x0 = StateVec64::new(vec![2.0 + radius * angle.cos(), radius * angle.sin(), 0.0]).unwrap();
            let traj = simulate_controlled(&spec, &x0, &p, &cfg, 3.0).map_err(|e| e.to_string())?;
            for (t, z) in traj.times().iter().zip(traj.states()) {
                let dist = StateVec64::new(z.to_vec()).unwrap().distance(&target);
                worst_hold = worst_hold.max(dist / (radius * (-2.0 * t).exp() * (1.0 + 10.0 * dt)));
            }
        }
    }
    ensure(
        worst_line <= 1e-3 && worst_hold <= 1.0,
        format!("line_to max miss {worst_line:.2e}; hold_at max ratio to bound {worst_hold:.4}"),
    )
}

fn component_identity() -> Check {
    let p = SystemParams64::new(2, 1, 0.3).unwrap();
    let coarse_cfg = SolverConfig64::new(1e-3).unwrap();
    let fine_cfg = SolverConfig64::new(5e-4).unwrap().with_stride(2).unwrap();
    let (mut coarse, mut fine) = (Vec::new(), Vec::new());
    for s in 0..10 {
        let fine_src = IncrementSource::new(seed_for(9, s), 0, 1, 5e-4).map_err(|e| e.to_string())?;
        let coarse_src = fine_src.coarsened(2).map_err(|e| e.to_string())?;
        coarse.push(component_identity_residual(&p, &coarse_src, &coarse_cfg, 10.0).map_err(|e| e.to_string())?.residual);
        fine.push(component_identity_residual(&p, &fine_src, &fine_cfg, 10.0).map_err(|e| e.to_string())?.residual);
    }
    let worst = coarse.iter().copied().fold(0.0, f64::max);
    let ratio = median(&coarse) / median(&fine);
    ensure(
        worst <= 1e-2 && (1.5..=2.5).contains(&ratio),
        format!("max residual {worst:.2e} at dt=1e-3, halving ratio {ratio:.3}"),
    )
}

fn verdicts() -> Check {
    let cfg = SolverConfig64::new(1e-3).unwrap().with_stride(1000).unwrap();
    let seeds: Vec<u64> = (0..20).map(|i| seed_for(2024, i)).collect();
    let rule = VerdictRule::default();
    let strong = SystemParams64::new(2, 1, 2.0).unwrap();
    let ball = EnsembleSpec::ball(StateVec64::zeros(2), 1.0, 64);
    let a = ensemble_diameter_seeds(&ball, &strong, &cfg, &seeds, 50.0, &rule).map_err(|e| e.to_string())?;
    let weak = SystemParams64::new(2, 1, 0.3).unwrap();
    let pair = EnsembleSpec::antipodal_last_axis(2);
    let b = ensemble_diameter_seeds(&pair, &weak, &cfg, &seeds, 100.0, &rule).map_err(|e| e.to_string())?;
    ensure(
        a.verdict == Verdict::Synchronizing && b.verdict == Verdict::NonSynchronizing,
        format!(
            "sigma 2 ball: {} (median final {:.2e}); sigma 0.3 pair: {} (median final {:.3})",
            a.verdict.as_str(),
            a.median_diameters.last().unwrap(),
            b.verdict.as_str(),
            b.median_diameters.last().unwrap()
        ),
    )
}

fn stationarity() -> Check {
    let (p, cfg, mc) = mc_setup();
    let ks = stationarity_ks(&p, &cfg, &mc, 100, None).map_err(|e| e.to_string())?;
    ensure(ks <= 0.05, format!("KS distance {ks:.4}"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Runs `command` with the shipped config and returns every file it wrote,
/// with `wall_time_seconds` removed from the manifest.
fn run_outputs(command: &str, threads: usize, out: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = configs_dir().join(format!("{}.toml", command.replace('-', "_")));
    let status = Command::new(env!("CARGO_BIN_EXE_ddw"))
        .args([command, "--threads", &threads.to_string(), "--out"])
        .arg(out)
        .arg("--config")
        .arg(&config)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("{command} exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name.ends_with(".manifest.json") {
            let mut v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            v.as_object_mut().unwrap().remove("wall_time_seconds");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands = ["quad", "sigma-star", "lyap-mc", "sync-scan", "pullback", "bound-check", "verify"];
    let mut compared = 0;
    for command in commands {
        let one = run_outputs(command, 1, &tmp.path().join(format!("{command}-1")))?;
        let eight = run_outputs(command, 8, &tmp.path().join(format!("{command}-8")))?;
        if one.len() < 2 || one != eight {
            return Err(format!("{command}: outputs differ between 1 and 8 threads"));
        }
        compared += one.len();
    }
    Ok(format!("{} commands, {compared} files byte-identical at 1 and 8 threads", commands.len()))
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { lines: Vec::new() };
    let secs = Duration::from_secs;
    report.record(1, "sign theorem n = 1", Some(secs(1)), sign_n1);
    report.record(2, "sign theorem n >= 2", Some(secs(5)), sign_n_ge_2);
    report.record(3, "sigma* bracket", Some(secs(2)), sigma_star_bracket);
    report.record(4, "closed form n = 2", None, closed_form);
    let start = Instant::now();
    let run = mc_run();
    let mc_time = start.elapsed();
    report.record(5, "estimator agreement", None, || {
        let c = estimator_agreement(&run);
        if mc_time > secs(300) {
            return Err(format!("{}; Monte Carlo took {mc_time:.0?}", c.unwrap_or_else(|e| e)));
        }
        c.map(|d| format!("{d}; Monte Carlo {mc_time:.1?}"))
    });
    report.record(6, "Gronwall tangent bound", None, || gronwall(&run));
    report.record(7, "pairwise bound", None, pairwise_bound);
    report.record(8, "controlled paths", None, controlled_paths);
    report.record(9, "component identity", None, component_identity);
    report.record(10, "synchronization verdicts", Some(secs(600)), verdicts);
    report.record(11, "stationarity", None, stationarity);
    report.record(12, "thread-count determinism", None, determinism);
    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!("acceptance: {} of {} criteria passed", report.lines.len() - failed.len(), report.lines.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
