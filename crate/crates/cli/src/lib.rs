//! `ddw` command-line front end: config loading, dispatch to `ddw-core`,
//! and reproducible CSV/JSON output with a manifest per run.

// `!(a < b)` guards reject NaN; coefficient tables keep their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::inconsistent_digit_grouping, clippy::unusual_byte_groupings)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::commands::Outcome;
use crate::config::{
    load, BoundCheckConfig, Common, LyapMcConfig, PullbackConfig, QuadConfig, SigmaStarConfig, SyncScanConfig,
    VerifyConfig,
};
use crate::error::{CliError, CliResult};
use crate::output::{config_digest, write_all};

#[derive(Debug, Parser)]
#[command(name = "ddw", version, about = "Lyapunov exponents and synchronization for the double-well SDE")]
pub struct Cli {
    /// TOML config file; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_path` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Top Lyapunov exponent by radial quadrature.
    Quad,
    /// Critical noise strength for n = 1.
    SigmaStar,
    /// Monte Carlo Lyapunov estimates.
    LyapMc,
    /// Synchronization verdicts over a sigma grid.
    SyncScan,
    /// Pullback ensemble diameters.
    Pullback,
    /// Pairwise distance bound check.
    BoundCheck,
    /// Fast self-test of every module.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Quad => "quad",
            Command::SigmaStar => "sigma-star",
            Command::LyapMc => "lyap-mc",
            Command::SyncScan => "sync-scan",
            Command::Pullback => "pullback",
            Command::BoundCheck => "bound-check",
            Command::Verify => "verify",
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Validation("`--threads` must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Quad => dispatch(cli, load::<QuadConfig>(cfg_path)?, false, |_| {}, |c, _| commands::quad(c)),
        Command::SigmaStar => {
            dispatch(cli, load::<SigmaStarConfig>(cfg_path)?, false, |_| {}, |c, _| commands::sigma_star_cmd(c))
        }
        Command::LyapMc => dispatch(cli, load::<LyapMcConfig>(cfg_path)?, true, LyapMcConfig::resolve, |c, s| {
            commands::lyap_mc(c, s.expect("required"))
        }),
        Command::SyncScan => dispatch(cli, load::<SyncScanConfig>(cfg_path)?, true, SyncScanConfig::resolve, |c, s| {
            commands::sync_scan_cmd(c, s.expect("required"))
        }),
        Command::Pullback => dispatch(cli, load::<PullbackConfig>(cfg_path)?, true, |_| {}, |c, s| {
            commands::pullback(c, s.expect("required"))
        }),
        Command::BoundCheck => dispatch(cli, load::<BoundCheckConfig>(cfg_path)?, true, |_| {}, |c, s| {
            commands::bound_check(c, s.expect("required"))
        }),
        Command::Verify => dispatch(cli, load::<VerifyConfig>(cfg_path)?, true, |_| {}, |c, s| {
            Ok(verify::verify(c, s.expect("required")))
        }),
    }
}

fn dispatch<C: Common + Serialize>(
    cli: &Cli,
    mut cfg: C,
    needs_seed: bool,
    resolve: impl FnOnce(&mut C),
    body: impl FnOnce(&C, Option<u64>) -> CliResult<Outcome>,
) -> CliResult<i32> {
    if let Some(seed) = cli.seed {
        *cfg.seed_mut() = Some(seed);
    }
    let seed = *cfg.seed_mut();
    if needs_seed && seed.is_none() {
        return Err(CliError::Validation(format!(
            "`{}` is stochastic: set `seed` in the config or pass --seed",
            cli.command.name()
        )));
    }
    cfg.validate()?;
    resolve(&mut cfg);
    let out_dir: PathBuf = cli
        .out
        .clone()
        .or_else(|| cfg.output_path().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("ddw-out"));
    let digest = config_digest(&cfg);
    let start = Instant::now();
    let outcome = body(&cfg, seed)?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = write_all(&out_dir, cli.command.name(), &digest, seed, wall, &outcome.summary, &outcome.artifacts)?;
    println!("{}", serde_json::to_string(&outcome.summary).expect("serializable"));
    println!("manifest: {}", manifest.display());
    match outcome.failure {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(e.exit_code())
        }
        None => Ok(0),
    }
}
