use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn ddw(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddw")).args(args).current_dir(cwd).output().expect("spawn ddw")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path, command: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{command}.manifest.json"))).unwrap()).unwrap()
}

const BOUND: &str = "d = 2\nn = 1\nsigma_grid = [2.0]\ndt = 1e-3\ntrials = 20\n";

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ddw(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(ddw(&["--version"], tmp.path()).status.code(), Some(0));
    assert_eq!(ddw(&["no-such-command"], tmp.path()).status.code(), Some(1));
}

#[test]
fn unknown_field_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", "n = 1\nsigma_grid = [1.0]\nsigmma = 2.0\n");
    let o = ddw(&["quad", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sigmma"), "{}", stderr(&o));
}

#[test]
fn out_of_range_value_names_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", "n = 1\nsigma_grid = [1.0, -2.0]\n");
    let o = ddw(&["quad", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sigma_grid"), "{}", stderr(&o));
    let cfg = write(tmp.path(), "l.toml", "seed = 1\nd = 2\nn = 1\nsigma = 1.0\ndt = 1e-3\nhorizon = 10.0\nn_traj = 1\n");
    let o = ddw(&["lyap-mc", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_traj"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ddw(&["sigma-star", "--config", "does-not-exist.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "b.toml", BOUND);
    let o = ddw(&["bound-check", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "b.toml", &format!("seed = 5\n{BOUND}"));
    assert_eq!(ddw(&["bound-check", "--config", &cfg, "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(ddw(&["bound-check", "--config", &cfg, "--seed", "6", "--out", "b"], tmp.path()).status.code(), Some(0));
    let cfg6 = write(tmp.path(), "b6.toml", &format!("seed = 6\n{BOUND}"));
    assert_eq!(ddw(&["bound-check", "--config", &cfg6, "--out", "c"], tmp.path()).status.code(), Some(0));
    let (a, b, c) = (manifest(&tmp.path().join("a"), "bound_check"), manifest(&tmp.path().join("b"), "bound_check"), manifest(&tmp.path().join("c"), "bound_check"));
    assert_eq!(a["master_seed"], 5);
    assert_eq!(b["master_seed"], 6);
    assert_eq!(b["config_digest"], c["config_digest"]);
    assert_ne!(a["config_digest"], b["config_digest"]);
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("bound_check.json")).unwrap();
    assert_eq!(read("b"), read("c"));
}

#[test]
fn digest_ignores_field_order_and_formatting() {
    let tmp = tempfile::tempdir().unwrap();
    let one = write(tmp.path(), "1.toml", "n = [1, 2]\nsigma_grid = [0.5, 1.0]\ntol = 1e-10\n");
    let two = write(tmp.path(), "2.toml", "# reordered\ntol = 0.0000000001\nsigma_grid = [0.5, 1.0]\n\nn = [1, 2]\n");
    assert_eq!(ddw(&["quad", "--config", &one, "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(ddw(&["quad", "--config", &two, "--out", "b"], tmp.path()).status.code(), Some(0));
    let (a, b) = (manifest(&tmp.path().join("a"), "quad"), manifest(&tmp.path().join("b"), "quad"));
    assert_eq!(a["config_digest"], b["config_digest"]);
    assert_eq!(a["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_references_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", "n = 2\nsigma_grid = [0.5, 1.0, 2.0]\n");
    let o = ddw(&["quad", "--config", &cfg, "--out", "q"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("q");
    let m = manifest(&dir, "quad");
    assert_eq!(m["command"], "quad");
    assert!(m["master_seed"].is_null());
    assert!(m["tool_version"].as_str().unwrap().starts_with("ddw-cli"));
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    for entry in outputs {
        let bytes = std::fs::read(dir.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let csv = std::fs::read_to_string(dir.join("quad.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n,sigma,lambda_top,abs_error_estimate,tail_bound,truncation_radius,accuracy,closed_form_n2");
    assert_eq!(rows.len(), 4);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let (q, c): (f64, f64) = (f[2].parse().unwrap(), f[7].parse().unwrap());
        assert!(q < 0.0 && ((q - c) / c).abs() <= 1e-10, "{row}");
    }
}

#[test]
fn sigma_star_bracket_inside_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", "tol = 1e-6\n");
    assert_eq!(ddw(&["sigma-star", "--config", &cfg, "--out", "s"], tmp.path()).status.code(), Some(0));
    let v: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("s/sigma_star.json")).unwrap()).unwrap();
    let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(0.5 < lo && lo < hi && hi < 2.0 && hi - lo <= 2e-6, "{v}");
}

#[test]
fn sync_scan_two_point_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        "seed = 11\nd = 2\nn = 1\nsigma_grid = [0.5, 2.0]\ndt = 1e-3\nt_end = 50.0\nn_seeds = 6\nhorizon = 200.0\nn_traj = 4\n\n[ensemble]\nsampling = \"ball_uniform\"\nradius = 1.0\ncount = 16\n",
    );
    let o = ddw(&["sync-scan", "--config", &cfg, "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("s/sync_scan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sigma,n,d,lambda_quad,lambda_mc,lambda_mc_stderr,median_final_diameter,verdict");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.5,1,2,") && rows[1].ends_with(",non_synchronizing"), "{}", rows[1]);
    assert!(rows[2].starts_with("2.0,1,2,") && rows[2].ends_with(",synchronizing"), "{}", rows[2]);
}

#[test]
fn pullback_and_lyap_mc_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let pb = write(
        tmp.path(),
        "p.toml",
        "seed = 2\nd = 2\nn = 1\nsigma = 2.0\ndt = 1e-3\nT_list = [1.0, 10.0]\nn_seeds = 3\n\n[ensemble]\nsampling = \"sphere_surface\"\nradius = 1.0\ncount = 8\n",
    );
    assert_eq!(ddw(&["pullback", "--config", &pb, "--out", "o"], tmp.path()).status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("o/pullback.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("T,median_diameter,max_diameter"));
    assert_eq!(csv.lines().count(), 3);
    let lm = write(tmp.path(), "l.toml", "seed = 2\nd = 2\nn = 1\nsigma = 2.0\ndt = 1e-3\nhorizon = 20.0\nn_traj = 2\n");
    assert_eq!(ddw(&["lyap-mc", "--config", &lm, "--out", "o"], tmp.path()).status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("o/lyap_mc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,sigma,n,d,value,stderr,burn_in,horizon,n_traj");
    assert!(rows[1].starts_with("ergodic_n1,2.0,1,2,") && rows[2].starts_with("benettin,2.0,1,2,"));
    assert!(rows[1].ends_with(",2.0,20.0,2"), "{}", rows[1]);
}

#[test]
fn divergence_exits_with_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "b.toml",
        "seed = 3\nd = 2\nn = 1\nsigma = 4.0\ndt = 0.5\nscheme = \"em\"\nburn_in = 10.0\nhorizon = 100.0\nn_traj = 2\n",
    );
    let o = ddw(&["lyap-mc", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("lyapunov") && err.contains("sigma=4"), "{err}");
}

#[test]
fn zero_threads_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ddw(&["sigma-star", "--threads", "0"], tmp.path()).status.code(), Some(1));
}
