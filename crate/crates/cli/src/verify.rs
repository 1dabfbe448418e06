//! Fast self-test: one short numerical check per module invariant.

use rayon::prelude::*;
use serde_json::json;

use ddw_core::integrator::{simulate, simulate_controlled, step};
use ddw_core::lyapunov::{
    benettin_lambda, component_identity_residual, ergodic_lambda_n1, stationarity_ks, DEFAULT_RENORM_EVERY,
};
use ddw_core::model::{drift, drift_jacobian_apply, one_sided_gap};
use ddw_core::quadrature::{
    closed_form_bound_n2, lambda_numerator_n1, lambda_top_quad, scaled_normalization, sigma_star,
};
use ddw_core::stats::ks_distance;
use ddw_core::sync::{ensemble_diameter_seeds, pairwise_bound_check, seed_for, EnsembleSpec};
use ddw_core::{
    ControlSpec, IncrementSource, McSpec64, Result as CoreResult, SolverConfig64, StateVec64, SystemParams64, Verdict,
    VerdictRule,
};

use crate::commands::Outcome;
use crate::config::VerifyConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, Artifact, Csv};

/// Outcome of one check: the measured value and the limit it is held to.
struct Check {
    module: &'static str,
    name: &'static str,
    value: CoreResult<f64>,
    limit: &'static str,
    passed: bool,
}

fn check(
    module: &'static str,
    name: &'static str,
    limit: &'static str,
    value: CoreResult<f64>,
    pass: impl Fn(f64) -> bool,
) -> Check {
    let passed = matches!(value, Ok(v) if pass(v));
    Check { module, name, value, limit, passed }
}

/// Standard normal sample stream used for random test points.
fn gaussians(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let src = IncrementSource::new(seed, stream, 1, 1.0).expect("valid source");
    (0..count as i64).map(|k| src.increment(k)[0]).collect()
}

fn model_checks(seed: u64) -> Vec<Check> {
    let g = gaussians(seed, 1, 40_000);
    let points: Vec<StateVec64> = g.chunks_exact(4).map(|c| StateVec64::new(c.to_vec()).unwrap().scaled(1.5)).collect();
    let gap = points.chunks_exact(2).map(|p| one_sided_gap(&p[0], &p[1])).fold(f64::NEG_INFINITY, f64::max);
    let mut fd = 0.0f64;
    for p in points.chunks_exact(2).take(500) {
        let (x, u) = (&p[0], &p[1]);
        let h = 1e-6;
        let plus = drift(&StateVec64::new(x.as_slice().iter().zip(u.as_slice()).map(|(a, b)| a + h * b).collect()).unwrap());
        let minus = drift(&StateVec64::new(x.as_slice().iter().zip(u.as_slice()).map(|(a, b)| a - h * b).collect()).unwrap());
        let exact = drift_jacobian_apply(x, u);
        for i in 0..4 {
            let approx = (plus[i] - minus[i]) / (2.0 * h);
            fd = fd.max((approx - exact[i]).abs() / (1.0 + exact[i].abs()));
        }
    }
    let sphere = drift(&StateVec64::basis(3, 1)).norm();
    vec![
        check("model", "one_sided_lipschitz_gap", "<= 0", Ok(gap), |v| v <= 0.0),
        check("model", "jacobian_vs_finite_difference", "<= 1e-6", Ok(fd), |v| v <= 1e-6),
        check("model", "drift_vanishes_on_unit_sphere", "== 0", Ok(sphere), |v| v == 0.0),
    ]
}

fn simpson(f: impl Fn(f64) -> f64, b: f64, m: usize) -> f64 {
    let h = b / m as f64;
    let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h)).sum();
    (f(0.0) + inner + f(b)) * h / 3.0
}

fn quadrature_checks(tol: f64) -> Vec<Check> {
    let oracle = |n: usize, sigma: f64| -> CoreResult<f64> {
        let r = lambda_top_quad(n, sigma, tol)?;
        let w = |x: f64| x.powi(n as i32 - 1) * (-(x * x - 1.0).powi(2) / (2.0 * sigma * sigma)).exp();
        let num = simpson(|x| (1.0 - x * x) * w(x), r.truncation_radius, 200_000);
        let den = simpson(w, r.truncation_radius, 200_000);
        Ok((r.value - num / den).abs() - r.total_error())
    };
    let simpson_gap = [(1, 0.5), (1, 2.0), (2, 1.0), (3, 1.0)]
        .iter()
        .map(|&(n, s)| oracle(n, s))
        .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)));
    let closed = closed_form_bound_n2(1.0, tol).and_then(|c| Ok(((c - lambda_top_quad(2, 1.0, tol)?.value) / c).abs()));
    let sign_n1 = lambda_top_quad(1, 0.5, tol)
        .and_then(|a| Ok(a.value.min(-lambda_top_quad(1, 2.0, tol)?.value)));
    let sign_n2 = [2usize, 3, 4]
        .iter()
        .flat_map(|&n| [0.3, 0.5, 1.0, 2.0, 4.0].map(move |s| (n, s)))
        .map(|(n, s)| lambda_top_quad(n, s, tol).map(|r| r.value))
        .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)));
    let star = sigma_star(1e-6).map(|r| if r.lower > 0.5 && r.upper < 2.0 && r.width() <= 2e-6 { r.midpoint() } else { f64::NAN });
    let monotone = (0..100)
        .map(|i| lambda_numerator_n1(0.3 + 2.7 * i as f64 / 99.0, 1e-12).map(|r| r.value))
        .collect::<CoreResult<Vec<f64>>>()
        .map(|v| v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    let laplace = scaled_normalization(1, 0.1, tol).map(|z| z.value / (0.1 * (2.0 * std::f64::consts::PI).sqrt()));
    vec![
        check("quadrature", "simpson_oracle_excess_error", "<= 1e-9", simpson_gap, |v| v <= 1e-9),
        check("quadrature", "closed_form_n2_rel_diff", "<= 1e-10", closed, |v| v <= 1e-10),
        check("quadrature", "n1_sign_margin", "> 0", sign_n1, |v| v > 0.0),
        check("quadrature", "n_ge_2_max_value", "< 0", sign_n2, |v| v < 0.0),
        check("quadrature", "sigma_star_midpoint", "in (0.5; 2)", star, |v| v > 0.5 && v < 2.0),
        check("quadrature", "n1_numerator_max_increment", "< 0", monotone, |v| v < 0.0),
        check("quadrature", "laplace_ratio_sigma_0.1", "in [0.99; 1.01]", laplace, |v| (0.99..=1.01).contains(&v)),
    ]
}

fn noise_checks(seed: u64) -> Vec<Check> {
    let src = IncrementSource::new(seed, 0, 2, 1e-3).expect("valid source");
    let xs: Vec<f64> = (0..100_000i64).map(|k| src.increment(k)[0] / 1e-3f64.sqrt()).collect();
    let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    let lag = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (xs.len() - 1) as f64;
    let ks = ks_distance(&xs, |x| 0.5 * erfc(-x / std::f64::consts::SQRT_2));
    let shift_ok = (-50..50).all(|k| src.shift(7).shift(-3).increment(k) == src.increment(k + 4));
    let repeat_ok = (-50..50).all(|k| {
        let again = IncrementSource::new(seed, 0, 2, 1e-3).unwrap().increment(k);
        again.iter().zip(src.increment(k)).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    vec![
        check("noise", "unit_variance", "in [0.99; 1.01]", Ok(var), |v| (0.99..=1.01).contains(&v)),
        check("noise", "lag1_correlation", "|.| <= 0.02", Ok(lag), |v| v.abs() <= 0.02),
        check("noise", "ks_vs_standard_normal", "<= 0.01", Ok(ks), |v| v <= 0.01),
        check("noise", "shift_group_and_determinism", "== 1", Ok(f64::from(u8::from(shift_ok && repeat_ok))), |v| v == 1.0),
    ]
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn integrator_checks(seed: u64, dt: f64) -> Vec<Check> {
    let cfg = SolverConfig64::new(dt).expect("validated dt");
    let m_invariance = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(4, 2, 1.3)?;
        let src = IncrementSource::new(seed, 0, 2, dt)?;
        let x0 = StateVec64::new(vec![0.3, -1.2, 0.0, 0.0])?;
        let traj = simulate(&x0, &src, &p, &cfg.with_stride(100)?, -5.0, 5.0)?;
        Ok(traj.states().map(|x| x[2].abs().max(x[3].abs())).fold(0.0, f64::max))
    })();
    let sign = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(3, 1, 2.0)?;
        let g = gaussians(seed, 2, 3 * 20_000);
        let mut worst = f64::INFINITY;
        for (i, c) in g.chunks_exact(3).enumerate() {
            let x = StateVec64::new(vec![4.0 * c[0], 4.0 * c[1], (0.5 * c[2]).abs() + 1e-3])?;
            let src = IncrementSource::new(seed, 3, 1, dt)?;
            let y = step(&x, i as i64, &src, &p, &cfg)?;
            worst = worst.min(y[2]);
        }
        Ok(worst)
    })();
    let contraction = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.0)?;
        let src = IncrementSource::new(seed, 0, 1, dt)?;
        let g = gaussians(seed, 4, 4 * 2_000);
        let mut worst = f64::NEG_INFINITY;
        for c in g.chunks_exact(4) {
            let push = |a: f64, b: f64| {
                let r = (a * a + b * b).sqrt().max(1e-12);
                let s = (2.0 + a.abs() * 2.0) / r;
                StateVec64::new(vec![a * s, b * s])
            };
            let (x, y) = (push(c[0], c[1])?, push(c[2], c[3])?);
            let before = x.distance(&y);
            let after = step(&x, 0, &src, &p, &cfg)?.distance(&step(&y, 0, &src, &p, &cfg)?);
            worst = worst.max(after - before);
        }
        Ok(worst)
    })();
    let hold = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 1.0)?;
        let target = StateVec64::new(vec![2.0, 0.0])?;
        let spec = ControlSpec::HoldAt { target: target.clone() };
        let mut worst = f64::NEG_INFINITY;
        for r in [1.0, 4.0] {
            let x0 = StateVec64::new(vec![2.0 - r * 0.6, r * 0.8])?;
            let traj = simulate_controlled(&spec, &x0, &p, &cfg.with_stride(10)?, 3.0)?;
            for (t, z) in traj.times().iter().zip(traj.states()) {
                let dist = StateVec64::new(z.to_vec())?.distance(&target);
                worst = worst.max(dist / (r * (-2.0 * t).exp() * (1.0 + 10.0 * dt)));
            }
        }
        Ok(worst)
    })();
    let line = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.7)?;
        let (x, y) = (StateVec64::new(vec![-0.9, 0.0])?, StateVec64::new(vec![0.9, 0.0])?);
        let t0 = 1.5f64.ln();
        let fine = SolverConfig64::new(1e-4)?.with_stride(1000)?;
        let traj = simulate_controlled(&ControlSpec::LineTo { from: x.clone(), to: y.clone(), t0 }, &x, &p, &fine, t0)?;
        Ok(StateVec64::new(traj.last().expect("non-empty").to_vec())?.distance(&y))
    })();
    vec![
        check("integrator", "m_invariance_max_offset", "== 0", m_invariance, |v| v == 0.0),
        check("integrator", "noiseless_sign_min_component", "> 0", sign, |v| v > 0.0),
        check("integrator", "contraction_outside_radius_2", "< 0", contraction, |v| v < 0.0),
        check("integrator", "hold_at_bound_ratio", "<= 1", hold, |v| v <= 1.0),
        check("integrator", "line_to_endpoint_error", "<= 1e-3", line, |v| v <= 1e-3),
    ]
}

fn lyapunov_checks(cfg: &VerifyConfig, seed: u64) -> Vec<Check> {
    let solver = SolverConfig64::new(cfg.dt).expect("validated dt");
    let horizon = (cfg.horizon / cfg.dt).round() * cfg.dt;
    let burn_in = ((0.1 * horizon) / cfg.dt).round() * cfg.dt;
    let mc = McSpec64::new(seed, horizon, cfg.n_traj).with_burn_in(burn_in);
    let p = SystemParams64::new(2, 1, 2.0).expect("valid params");
    let exact = lambda_top_quad(1, 2.0, cfg.tol).map(|r| r.value);
    let ergodic = ergodic_lambda_n1(&p, &solver, &mc, None);
    let v0 = StateVec64::new(vec![1.0, 1.0]).expect("finite");
    let benettin = benettin_lambda(&p, None, &v0, &solver, &mc, DEFAULT_RENORM_EVERY);
    let z = |a: &CoreResult<ddw_core::LyapunovEstimate64>, b: CoreResult<(f64, f64)>| -> CoreResult<f64> {
        let a = a.clone()?;
        let (bv, bs) = b?;
        Ok((a.value - bv).abs() / (a.stderr * a.stderr + bs * bs).sqrt())
    };
    let ergodic_vs_quad = z(&ergodic, exact.clone().map(|v| (v, 0.0)));
    let benettin_vs_ergodic = z(&benettin, ergodic.clone().map(|e| (e.value, e.stderr)));
    let gronwall = benettin.clone().map(|b| b.gronwall_violations as f64);
    let n2 = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(3, 2, 1.0)?;
        let short = McSpec64::new(seed, burn_in * 5.0, 4.max(cfg.n_traj / 4)).with_burn_in(burn_in);
        Ok(benettin_lambda(&p, None, &StateVec64::new(vec![1.0; 3])?, &solver, &short, DEFAULT_RENORM_EVERY)?.value)
    })();
    let identity = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.0)?;
        let src = IncrementSource::new(seed, 0, 1, cfg.dt)?;
        Ok(component_identity_residual(&p, &src, &solver, 10.0)?.residual)
    })();
    let identity_noisy = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.3)?;
        let src = IncrementSource::new(seed, 0, 1, cfg.dt)?;
        Ok(component_identity_residual(&p, &src, &solver, 10.0)?.residual)
    })();
    let ks = stationarity_ks(&p, &solver, &mc, 100, None);
    vec![
        check("lyapunov", "ergodic_vs_quadrature_z", "<= 4", ergodic_vs_quad, |v| v <= 4.0),
        check("lyapunov", "benettin_vs_ergodic_z", "<= 4", benettin_vs_ergodic, |v| v <= 4.0),
        check("lyapunov", "gronwall_violations", "== 0", gronwall, |v| v == 0.0),
        check("lyapunov", "benettin_n2_value", "< 0", n2, |v| v < 0.0),
        check("lyapunov", "component_identity_sigma_0", "<= 1e-6", identity, |v| v <= 1e-6),
        check("lyapunov", "component_identity_sigma_0.3", "<= 1e-2", identity_noisy, |v| v <= 1e-2),
        check("lyapunov", "stationarity_ks", "<= 0.05", ks, |v| v <= 0.05),
    ]
}

fn sync_checks(cfg: &VerifyConfig, seed: u64) -> Vec<Check> {
    let solver = SolverConfig64::new(cfg.dt).expect("validated dt").with_stride(1000).expect("stride");
    let seeds: Vec<u64> = (0..cfg.n_seeds).map(|i| seed_for(seed, i)).collect();
    let rule = VerdictRule::default();
    let verdict_code = |v: Verdict| match v {
        Verdict::Synchronizing => 1.0,
        Verdict::Inconclusive => 0.0,
        Verdict::NonSynchronizing => -1.0,
    };
    let deterministic = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.0)?;
        let spec = EnsembleSpec::pair(StateVec64::basis(2, 0).scaled(0.2), StateVec64::basis(2, 0).scaled(0.7));
        let r = ensemble_diameter_seeds(&spec, &p, &solver, &seeds[..1], 30.0, &rule)?;
        Ok(*r.median_diameters.last().expect("non-empty"))
    })();
    let strong = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 2.0)?;
        let spec = EnsembleSpec::ball(StateVec64::zeros(2), 1.0, 64);
        Ok(verdict_code(ensemble_diameter_seeds(&spec, &p, &solver, &seeds, 50.0, &rule)?.verdict))
    })();
    let weak = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 0.3)?;
        let spec = EnsembleSpec::antipodal_last_axis(2);
        Ok(verdict_code(ensemble_diameter_seeds(&spec, &p, &solver, &seeds, 100.0, &rule)?.verdict))
    })();
    let bound = (|| -> CoreResult<f64> {
        let p = SystemParams64::new(2, 1, 2.0)?;
        let b = pairwise_bound_check(&p, &SolverConfig64::new(cfg.dt)?, seed, cfg.trials)?;
        Ok(b.max_at_half.max(b.max_after_entry))
    })();
    let limit = 4.0 * (1.0 + 50.0 * cfg.dt);
    vec![
        check("sync", "sigma_0_pair_diameter_t30", "<= 1e-6", deterministic, |v| v <= 1e-6),
        check("sync", "sigma_2_ball_verdict", "== 1 (synchronizing)", strong, |v| v == 1.0),
        check("sync", "sigma_0.3_pair_verdict", "== -1 (non_synchronizing)", weak, |v| v == -1.0),
        check("sync", "pairwise_bound_max_distance", "<= 4(1+50dt)", bound, move |v| v <= limit),
    ]
}

pub fn verify(cfg: &VerifyConfig, seed: u64) -> Outcome {
    let groups: Vec<Box<dyn Fn() -> Vec<Check> + Sync>> = vec![
        Box::new(|| model_checks(seed)),
        Box::new(|| quadrature_checks(cfg.tol)),
        Box::new(|| noise_checks(seed)),
        Box::new(|| integrator_checks(seed, cfg.dt)),
        Box::new(|| lyapunov_checks(cfg, seed)),
        Box::new(|| sync_checks(cfg, seed)),
    ];
    let checks: Vec<Check> = groups.par_iter().map(|g| g()).collect::<Vec<_>>().into_iter().flatten().collect();
    let mut csv = Csv::new(&["module", "check", "value", "limit", "passed"]);
    let mut failed = Vec::new();
    println!("{:<11} {:<34} {:>24}  {:<26} result", "module", "check", "value", "limit");
    for c in &checks {
        let value = match &c.value {
            Ok(v) => fmt_f64(*v),
            Err(e) => {
                eprintln!("{}/{}: {e}", c.module, c.name);
                "error".to_string()
            }
        };
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{:<11} {:<34} {:>24}  {:<26} {verdict}", c.module, c.name, value, c.limit);
        csv.row(&[c.module.into(), c.name.into(), value, c.limit.into(), c.passed.to_string()]);
        if !c.passed {
            failed.push(format!("{}/{}", c.module, c.name));
        }
    }
    let summary = json!({ "checks": checks.len(), "failed": failed });
    let failure = (!failed.is_empty())
        .then(|| CliError::Numerical { module: "verify", message: format!("failed checks: {}", failed.join(", ")) });
    Outcome { artifacts: vec![Artifact { name: "verify.csv".into(), bytes: csv.into_bytes() }], summary, failure }
}
