use rayon::prelude::*;
use serde_json::{json, Value};

use ddw_core::lyapunov::{benettin_lambda, ergodic_lambda_n1};
use ddw_core::quadrature::{closed_form_bound_n2, lambda_top_quad, sigma_star};
use ddw_core::sync::{pairwise_bound_check, pullback_diameter, seed_for, sync_scan, ScanSettings};
use ddw_core::{LyapunovEstimate64, McSpec64, StateVec64, VerdictRule};

use crate::config::{
    BoundCheckConfig, LyapMcConfig, MethodName, PullbackConfig, QuadConfig, SigmaStarConfig, SyncScanConfig,
};
use crate::error::{from_core, CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, json_bytes, Artifact, Csv};

/// Files and summary of one command; `failure` is set when the command
/// produced output but some unit of it failed numerically.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(artifacts: Vec<Artifact>, summary: Value) -> Self {
        Self { artifacts, summary, failure: None }
    }
}

fn progress(line: String) {
    eprintln!("{line}");
}

pub fn quad(cfg: &QuadConfig) -> CliResult<Outcome> {
    let cells: Vec<(usize, f64)> =
        cfg.n.values().into_iter().flat_map(|n| cfg.sigma_grid.iter().map(move |&s| (n, s))).collect();
    let rows: Vec<CliResult<Vec<String>>> = cells
        .par_iter()
        .map(|&(n, sigma)| {
            let ctx = format!("lambda_top_quad(n={n}, sigma={sigma}, tol={})", cfg.tol);
            let r = lambda_top_quad(n, sigma, cfg.tol).map_err(|e| from_core("quadrature", &ctx, e))?;
            let closed = if n == 2 {
                let ctx = format!("closed_form_bound_n2(sigma={sigma})");
                Some(closed_form_bound_n2(sigma, cfg.tol).map_err(|e| from_core("quadrature", &ctx, e))?)
            } else {
                None
            };
            Ok(vec![
                n.to_string(),
                fmt_f64(sigma),
                fmt_f64(r.value),
                fmt_f64(r.abs_error_estimate),
                fmt_f64(r.tail_bound),
                fmt_f64(r.truncation_radius),
                r.accuracy.as_str().to_string(),
                fmt_opt(closed),
            ])
        })
        .collect();
    let mut csv = Csv::new(&[
        "n",
        "sigma",
        "lambda_top",
        "abs_error_estimate",
        "tail_bound",
        "truncation_radius",
        "accuracy",
        "closed_form_n2",
    ]);
    let mut positive = 0;
    for (row, &(n, sigma)) in rows.into_iter().zip(&cells) {
        let row = row?;
        if row[2].parse::<f64>().map(|v| v > 0.0).unwrap_or(false) {
            positive += 1;
        }
        progress(format!("quad n={n} sigma={} lambda={}", fmt_f64(sigma), row[2]));
        csv.row(&row);
    }
    Ok(Outcome::ok(
        vec![Artifact { name: "quad.csv".into(), bytes: csv.into_bytes() }],
        json!({ "rows": cells.len(), "positive_rows": positive }),
    ))
}

pub fn sigma_star_cmd(cfg: &SigmaStarConfig) -> CliResult<Outcome> {
    let r = sigma_star(cfg.tol).map_err(|e| from_core("quadrature", &format!("sigma_star(tol={})", cfg.tol), e))?;
    let body = json!({
        "tol": cfg.tol,
        "lower": r.lower,
        "upper": r.upper,
        "midpoint": r.midpoint(),
        "width": r.width(),
        "lambda_at_lower": r.lambda_at_lower,
        "lambda_at_upper": r.lambda_at_upper,
        "iterations": r.iterations,
    });
    progress(format!("sigma_star in [{}, {}]", fmt_f64(r.lower), fmt_f64(r.upper)));
    Ok(Outcome::ok(
        vec![Artifact { name: "sigma_star.json".into(), bytes: json_bytes(&body) }],
        json!({ "lower": r.lower, "upper": r.upper }),
    ))
}

pub fn lyap_mc(cfg: &LyapMcConfig, seed: u64) -> CliResult<Outcome> {
    let p = cfg.params()?;
    let solver = cfg.solver()?;
    let burn_in = cfg.burn_in.expect("resolved");
    let mc = McSpec64::new(seed, cfg.horizon, cfg.n_traj).with_burn_in(burn_in);
    let x0 = StateVec64::new(cfg.x0.clone().expect("resolved")).map_err(|e| CliError::Validation(e.to_string()))?;
    let v0 = StateVec64::new(cfg.v0.clone().expect("resolved")).map_err(|e| CliError::Validation(e.to_string()))?;
    let ctx = format!("d={}, n={}, sigma={}, dt={}", p.d, p.n, p.sigma, solver.dt);
    let mut csv = Csv::new(&["method", "sigma", "n", "d", "value", "stderr", "burn_in", "horizon", "n_traj"]);
    let mut summary = serde_json::Map::new();
    for method in cfg.methods.as_deref().expect("resolved") {
        let est: LyapunovEstimate64 = match method {
            MethodName::ErgodicN1 => ergodic_lambda_n1(&p, &solver, &mc, Some(&x0))
                .map_err(|e| from_core("lyapunov", &format!("ergodic_lambda_n1({ctx})"), e))?,
            MethodName::Benettin => benettin_lambda(&p, Some(&x0), &v0, &solver, &mc, cfg.renorm_every)
                .map_err(|e| from_core("lyapunov", &format!("benettin_lambda({ctx})"), e))?,
        };
        let name = est.method.as_str();
        progress(format!("lyap-mc {name}: {} +- {}", fmt_f64(est.value), fmt_f64(est.stderr)));
        csv.row(&[
            name.to_string(),
            fmt_f64(p.sigma),
            p.n.to_string(),
            p.d.to_string(),
            fmt_f64(est.value),
            fmt_f64(est.stderr),
            fmt_f64(est.burn_in),
            fmt_f64(est.horizon),
            est.n_trajectories.to_string(),
        ]);
        let mut entry = json!({ "value": est.value, "stderr": est.stderr });
        if *method == MethodName::Benettin {
            entry["gronwall_violations"] = json!(est.gronwall_violations);
            entry["max_growth_rate"] = json!(est.max_growth_rate);
        }
        summary.insert(name.to_string(), entry);
    }
    if let Ok(q) = lambda_top_quad(p.n, p.sigma, 1e-10) {
        summary.insert("lambda_quad".into(), json!(q.value));
        summary.insert("lambda_quad_accuracy".into(), json!(q.accuracy.as_str()));
    }
    Ok(Outcome::ok(vec![Artifact { name: "lyap_mc.csv".into(), bytes: csv.into_bytes() }], Value::Object(summary)))
}

pub fn sync_scan_cmd(cfg: &SyncScanConfig, seed: u64) -> CliResult<Outcome> {
    let template = cfg.template()?;
    let solver = cfg.solver()?.with_stride(1000).map_err(|e| CliError::Validation(e.to_string()))?;
    let ensemble = cfg.ensemble.as_ref().expect("resolved").build(&template)?;
    let settings = ScanSettings {
        seed,
        n_seeds: cfg.n_seeds,
        t_end: cfg.t_end,
        ensemble,
        mc: McSpec64::new(seed, cfg.horizon, cfg.n_traj).with_burn_in(cfg.burn_in.expect("resolved")),
        quad_tol: cfg.tol,
        rule: VerdictRule { sync_ratio: cfg.sync_ratio, nosync_ratio: cfg.nosync_ratio },
    };
    let rows = sync_scan(&cfg.sigma_grid, &template, &solver, &settings)
        .map_err(|e| from_core("sync", &format!("sync_scan(d={}, n={})", cfg.d, cfg.n), e))?;
    let mut csv = Csv::new(&[
        "sigma",
        "n",
        "d",
        "lambda_quad",
        "lambda_mc",
        "lambda_mc_stderr",
        "median_final_diameter",
        "verdict",
    ]);
    let mut failures = Vec::new();
    let mut verdicts = Vec::new();
    for row in &rows {
        let verdict = row.verdict.map(|v| v.as_str()).unwrap_or("");
        progress(format!("sync-scan sigma={} verdict={}", fmt_f64(row.sigma), if verdict.is_empty() { "-" } else { verdict }));
        csv.row(&[
            fmt_f64(row.sigma),
            row.n.to_string(),
            row.d.to_string(),
            fmt_opt(row.lambda_quad),
            fmt_opt(row.lambda_mc),
            fmt_opt(row.lambda_mc_stderr),
            fmt_opt(row.median_final_diameter),
            verdict.to_string(),
        ]);
        verdicts.push(json!({ "sigma": row.sigma, "verdict": row.verdict.map(|v| v.as_str()), "errors": row.errors }));
        for e in &row.errors {
            failures.push(format!("sigma={}: {e}", fmt_f64(row.sigma)));
        }
    }
    let failure = (!failures.is_empty()).then(|| CliError::Numerical { module: "sync", message: failures.join("; ") });
    Ok(Outcome {
        artifacts: vec![Artifact { name: "sync_scan.csv".into(), bytes: csv.into_bytes() }],
        summary: json!({ "rows": verdicts, "n_seeds": cfg.n_seeds }),
        failure,
    })
}

pub fn pullback(cfg: &PullbackConfig, seed: u64) -> CliResult<Outcome> {
    let p = cfg.params()?;
    let solver = cfg.solver()?.with_stride(usize::MAX).map_err(|e| CliError::Validation(e.to_string()))?;
    let spec = cfg.ensemble.build(&p)?;
    let seeds: Vec<u64> = (0..cfg.n_seeds).map(|i| seed_for(seed, i)).collect();
    let rows = pullback_diameter(&spec, &p, &solver, &seeds, &cfg.t_list)
        .map_err(|e| from_core("sync", &format!("pullback_diameter(d={}, n={}, sigma={})", p.d, p.n, p.sigma), e))?;
    let mut csv = Csv::new(&["T", "median_diameter", "max_diameter"]);
    for r in &rows {
        progress(format!("pullback T={} median={}", fmt_f64(r.t), fmt_f64(r.median_diameter)));
        csv.row(&[fmt_f64(r.t), fmt_f64(r.median_diameter), fmt_f64(r.max_diameter)]);
    }
    let last = rows.last().expect("non-empty T_list");
    Ok(Outcome::ok(
        vec![Artifact { name: "pullback.csv".into(), bytes: csv.into_bytes() }],
        json!({ "rows": rows.len(), "final_median_diameter": last.median_diameter }),
    ))
}

pub fn bound_check(cfg: &BoundCheckConfig, seed: u64) -> CliResult<Outcome> {
    let solver = cfg.solver()?;
    let limit = 4.0 * (1.0 + 50.0 * solver.dt);
    let mut rows = Vec::new();
    let mut all_within = true;
    for &sigma in &cfg.sigma_grid {
        let p = cfg.params(sigma)?;
        let ctx = format!("pairwise_bound_check(d={}, n={}, sigma={sigma}, trials={})", p.d, p.n, cfg.trials);
        let r = pairwise_bound_check(&p, &solver, seed, cfg.trials).map_err(|e| from_core("sync", &ctx, e))?;
        let within = r.max_at_half <= limit && r.max_after_entry <= limit;
        all_within &= within;
        progress(format!("bound-check sigma={} max_at_half={}", fmt_f64(sigma), fmt_f64(r.max_at_half)));
        rows.push(json!({
            "sigma": sigma,
            "max_at_half": r.max_at_half,
            "max_after_entry": r.max_after_entry,
            "within_limit": within,
        }));
    }
    let body = json!({ "trials": cfg.trials, "dt": solver.dt, "limit": limit, "rows": rows });
    Ok(Outcome::ok(
        vec![Artifact { name: "bound_check.json".into(), bytes: json_bytes(&body) }],
        json!({ "all_within_limit": all_within }),
    ))
}
