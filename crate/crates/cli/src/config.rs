//! Per-command experiment configs.
//!
//! Each command has its own schema; unknown keys (including keys that belong
//! to a different command) are rejected by name. Defaults are filled in
//! before the effective config is digested, so writing a default explicitly
//! does not change the digest.

use std::path::{Path, PathBuf};

use ddw_core::sync::{EnsembleSpec, Sampling};
use ddw_core::{Scheme, SolverConfig64, StateVec64, SystemParams64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn default_tol() -> f64 {
    1e-10
}

fn default_scheme() -> String {
    Scheme::TamedEm.as_str().to_string()
}

fn default_renorm_every() -> usize {
    ddw_core::lyapunov::DEFAULT_RENORM_EVERY
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Reads and parses `path`; with no path the empty document is parsed, so
/// commands whose fields all have defaults can run without a file.
pub fn load<C: DeserializeOwned>(path: Option<&Path>) -> CliResult<C> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    toml::from_str(&text).map_err(|e| {
        let origin = path.map(|p| p.display().to_string()).unwrap_or_else(|| "<no config>".into());
        validation(format!("{origin}: {}", e.message()))
    })
}

/// Fields shared by every command.
pub trait Common {
    fn seed_mut(&mut self) -> &mut Option<u64>;
    fn output_path(&self) -> Option<&Path>;
    fn validate(&self) -> CliResult<()>;
}

macro_rules! common_impl {
    ($t:ty) => {
        impl Common for $t {
            fn seed_mut(&mut self) -> &mut Option<u64> {
                &mut self.seed
            }
            fn output_path(&self) -> Option<&Path> {
                self.output_path.as_deref()
            }
            fn validate(&self) -> CliResult<()> {
                self.check()
            }
        }
    };
}

fn solver(dt: f64, scheme: &str) -> CliResult<SolverConfig64> {
    let scheme: Scheme = scheme.parse().map_err(|e: ddw_core::Error| validation(e.to_string()))?;
    SolverConfig64::with(dt, scheme, 1).map_err(|e| validation(e.to_string()))
}

fn params(d: usize, n: usize, sigma: f64) -> CliResult<SystemParams64> {
    SystemParams64::new(d, n, sigma).map_err(|e| validation(e.to_string()))
}

fn state(name: &str, v: &[f64], d: usize) -> CliResult<StateVec64> {
    if v.len() != d {
        return Err(validation(format!("`{name}` has {} components, expected d = {d}", v.len())));
    }
    StateVec64::new(v.to_vec()).map_err(|e| validation(format!("`{name}`: {e}")))
}

fn check_grid(name: &str, grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(validation(format!("`{name}` must not be empty")));
    }
    if grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(validation(format!("`{name}` entries must be finite and > 0")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(validation(format!("`{name}` must be strictly increasing")));
    }
    Ok(())
}

fn check_tol(tol: f64) -> CliResult<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(validation(format!("`tol` must lie in (0, 1), got {tol}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    BallUniform,
    SphereSurface,
    Pair,
}

/// `[ensemble]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    pub sampling: SamplingKind,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default, rename = "restrict_to_M")]
    pub restrict_to_m: bool,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
}

impl Ensemble {
    pub fn build(&self, p: &SystemParams64) -> CliResult<EnsembleSpec64> {
        let spec = match self.sampling {
            SamplingKind::Pair => {
                if self.center.is_some() || self.radius.is_some() {
                    return Err(validation("`center` and `radius` do not apply to pair sampling; give `x` and `y`"));
                }
                let x = self.x.as_deref().ok_or_else(|| validation("pair sampling needs `x`"))?;
                let y = self.y.as_deref().ok_or_else(|| validation("pair sampling needs `y`"))?;
                EnsembleSpec::pair(state("x", x, p.d)?, state("y", y, p.d)?)
            }
            kind => {
                if self.x.is_some() || self.y.is_some() {
                    return Err(validation("`x` and `y` only apply to pair sampling"));
                }
                let center = match &self.center {
                    Some(c) => state("center", c, p.d)?,
                    None => StateVec64::zeros(p.d),
                };
                let radius = self.radius.ok_or_else(|| validation("missing field `radius`"))?;
                let count = self.count.ok_or_else(|| validation("missing field `count`"))?;
                let sampling = if kind == SamplingKind::BallUniform { Sampling::BallUniform } else { Sampling::SphereSurface };
                EnsembleSpec { center, radius, count, sampling, restrict_to_m: self.restrict_to_m }
            }
        };
        let spec = EnsembleSpec { restrict_to_m: self.restrict_to_m, ..spec };
        spec.validate(p).map_err(|e| validation(e.to_string()))?;
        Ok(spec)
    }
}

type EnsembleSpec64 = EnsembleSpec<f64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    pub n: OneOrMany,
    pub sigma_grid: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl QuadConfig {
    fn check(&self) -> CliResult<()> {
        let ns = self.n.values();
        if ns.is_empty() || ns.contains(&0) {
            return Err(validation("`n` must be a positive integer or a non-empty list of them"));
        }
        check_grid("sigma_grid", &self.sigma_grid)?;
        check_tol(self.tol)
    }
}
common_impl!(QuadConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaStarConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "SigmaStarConfig::default_tol")]
    pub tol: f64,
}

impl SigmaStarConfig {
    fn default_tol() -> f64 {
        1e-6
    }

    fn check(&self) -> CliResult<()> {
        if !(self.tol >= 1e-12 && self.tol < 0.75) {
            return Err(validation(format!("`tol` must lie in [1e-12, 0.75), got {}", self.tol)));
        }
        Ok(())
    }
}
common_impl!(SigmaStarConfig);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    ErgodicN1,
    Benettin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapMcConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub horizon: f64,
    pub n_traj: usize,
    /// Defaults to both methods for n = 1 and Benettin otherwise.
    #[serde(default)]
    pub methods: Option<Vec<MethodName>>,
    #[serde(default = "default_renorm_every")]
    pub renorm_every: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
}

impl LyapMcConfig {
    pub fn solver(&self) -> CliResult<SolverConfig64> {
        solver(self.dt, &self.scheme)
    }

    /// Fills in defaults that depend on other fields.
    pub fn resolve(&mut self) {
        self.burn_in.get_or_insert(0.1 * self.horizon);
        if self.methods.is_none() {
            self.methods = Some(if self.n == 1 { vec![MethodName::ErgodicN1, MethodName::Benettin] } else { vec![MethodName::Benettin] });
        }
        if self.x0.is_none() {
            self.x0 = Some(StateVec64::basis(self.d.max(1), 0).into_vec());
        }
        if self.v0.is_none() {
            self.v0 = Some(vec![1.0; self.d]);
        }
    }

    pub fn params(&self) -> CliResult<SystemParams64> {
        params(self.d, self.n, self.sigma)
    }

    fn check(&self) -> CliResult<()> {
        let p = self.params()?;
        self.solver()?;
        if self.n_traj < 2 {
            return Err(validation("`n_traj` must be at least 2"));
        }
        let burn_in = self.burn_in.unwrap_or(0.1 * self.horizon);
        if !(burn_in >= 0.0 && self.horizon > burn_in && self.horizon.is_finite()) {
            return Err(validation(format!("need 0 <= burn_in < horizon, got burn_in = {burn_in}, horizon = {}", self.horizon)));
        }
        if self.renorm_every == 0 {
            return Err(validation("`renorm_every` must be >= 1"));
        }
        if let Some(m) = &self.methods {
            if m.is_empty() {
                return Err(validation("`methods` must not be empty"));
            }
            if m.contains(&MethodName::ErgodicN1) && p.n != 1 {
                return Err(validation("method `ergodic_n1` requires n = 1"));
            }
        }
        if let Some(x0) = &self.x0 {
            state("x0", x0, p.d)?;
        }
        if let Some(v0) = &self.v0 {
            let v = state("v0", v0, p.d)?;
            if v.norm() == 0.0 {
                return Err(validation("`v0` must be non-zero"));
            }
        }
        Ok(())
    }
}
common_impl!(LyapMcConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncScanConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    pub d: usize,
    pub n: usize,
    pub sigma_grid: Vec<f64>,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub t_end: f64,
    pub n_seeds: usize,
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub horizon: f64,
    pub n_traj: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Defaults to the pair `(e_d, -e_d)`.
    #[serde(default)]
    pub ensemble: Option<Ensemble>,
    #[serde(default = "SyncScanConfig::default_sync_ratio")]
    pub sync_ratio: f64,
    #[serde(default = "SyncScanConfig::default_nosync_ratio")]
    pub nosync_ratio: f64,
}

impl SyncScanConfig {
    pub fn solver(&self) -> CliResult<SolverConfig64> {
        solver(self.dt, &self.scheme)
    }

    fn default_sync_ratio() -> f64 {
        1e-3
    }

    fn default_nosync_ratio() -> f64 {
        0.05
    }

    pub fn resolve(&mut self) {
        self.burn_in.get_or_insert(0.1 * self.horizon);
        if self.ensemble.is_none() && self.d >= 1 {
            let e = StateVec64::last_basis(self.d).into_vec();
            self.ensemble = Some(Ensemble {
                sampling: SamplingKind::Pair,
                center: None,
                radius: None,
                count: None,
                restrict_to_m: false,
                y: Some(e.iter().map(|c| -c).collect()),
                x: Some(e),
            });
        }
    }

    pub fn template(&self) -> CliResult<SystemParams64> {
        params(self.d, self.n, self.sigma_grid.first().copied().unwrap_or(1.0))
    }

    fn check(&self) -> CliResult<()> {
        check_grid("sigma_grid", &self.sigma_grid)?;
        let p = self.template()?;
        self.solver()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(validation("`t_end` must be finite and > 0"));
        }
        if self.n_seeds == 0 {
            return Err(validation("`n_seeds` must be >= 1"));
        }
        if self.n_traj < 2 {
            return Err(validation("`n_traj` must be at least 2"));
        }
        let burn_in = self.burn_in.unwrap_or(0.1 * self.horizon);
        if !(burn_in >= 0.0 && self.horizon > burn_in && self.horizon.is_finite()) {
            return Err(validation(format!("need 0 <= burn_in < horizon, got burn_in = {burn_in}, horizon = {}", self.horizon)));
        }
        check_tol(self.tol)?;
        if !(self.sync_ratio > 0.0 && self.sync_ratio < self.nosync_ratio) {
            return Err(validation("need 0 < sync_ratio < nosync_ratio"));
        }
        if let Some(e) = &self.ensemble {
            e.build(&p)?;
        }
        Ok(())
    }
}
common_impl!(SyncScanConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub n_seeds: usize,
    pub ensemble: Ensemble,
}

impl PullbackConfig {
    pub fn solver(&self) -> CliResult<SolverConfig64> {
        solver(self.dt, &self.scheme)
    }

    pub fn params(&self) -> CliResult<SystemParams64> {
        params(self.d, self.n, self.sigma)
    }

    fn check(&self) -> CliResult<()> {
        let p = self.params()?;
        self.solver()?;
        if self.t_list.is_empty() {
            return Err(validation("`T_list` must not be empty"));
        }
        if self.t_list.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || self.t_list.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(validation("`T_list` must be non-negative, finite and strictly increasing"));
        }
        if self.n_seeds == 0 {
            return Err(validation("`n_seeds` must be >= 1"));
        }
        self.ensemble.build(&p)?;
        Ok(())
    }
}
common_impl!(PullbackConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    pub d: usize,
    pub n: usize,
    pub sigma_grid: Vec<f64>,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub trials: usize,
}

impl BoundCheckConfig {
    pub fn solver(&self) -> CliResult<SolverConfig64> {
        solver(self.dt, &self.scheme)
    }

    fn check(&self) -> CliResult<()> {
        check_grid("sigma_grid", &self.sigma_grid)?;
        params(self.d, self.n, self.sigma_grid[0])?;
        self.solver()?;
        if self.trials == 0 {
            return Err(validation("`trials` must be >= 1"));
        }
        Ok(())
    }

    pub fn params(&self, sigma: f64) -> CliResult<SystemParams64> {
        params(self.d, self.n, sigma)
    }
}
common_impl!(BoundCheckConfig);

/// Sizes of the self-test runs; the defaults finish in well under a minute.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "VerifyConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "VerifyConfig::default_horizon")]
    pub horizon: f64,
    #[serde(default = "VerifyConfig::default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "VerifyConfig::default_trials")]
    pub trials: usize,
    #[serde(default = "VerifyConfig::default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl VerifyConfig {
    fn default_dt() -> f64 {
        1e-3
    }

    fn default_horizon() -> f64 {
        400.0
    }

    fn default_n_traj() -> usize {
        16
    }

    fn default_trials() -> usize {
        200
    }

    fn default_n_seeds() -> usize {
        8
    }

    fn check(&self) -> CliResult<()> {
        SolverConfig64::new(self.dt).map_err(|e| validation(e.to_string()))?;
        if !(self.dt <= 1e-2) {
            return Err(validation("`dt` must be <= 1e-2 for the self-test thresholds to apply"));
        }
        if !(self.horizon >= 50.0 && self.horizon.is_finite()) {
            return Err(validation("`horizon` must be >= 50"));
        }
        if self.n_traj < 2 || self.trials == 0 || self.n_seeds == 0 {
            return Err(validation("`n_traj` >= 2, `trials` >= 1 and `n_seeds` >= 1 are required"));
        }
        check_tol(self.tol)
    }
}
common_impl!(VerifyConfig);
