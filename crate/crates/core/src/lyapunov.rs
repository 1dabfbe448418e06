//! Monte Carlo estimates of the top Lyapunov exponent.
//!
//! * [`ergodic_lambda_n1`]: for `n = 1` the exponent equals the long-run
//!   average of `1 - |phi_s|^2` along a trajectory in `M`.
//! * [`benettin_lambda`]: co-integrates a tangent vector and accumulates its
//!   log-growth between renormalizations.
//! * [`component_identity_residual`]: along the path started at `e_d`, the last
//!   coordinate equals `exp(int_0^t (1 - |phi_s|^2) ds)`; the residual measures
//!   how well the discretization honours that identity.
//!
//! Trajectory `i` uses noise stream `i`. Per-trajectory results are collected
//! in index order and reduced sequentially, so estimates do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::integrator::{step_variational_in_place, SolverConfig, Stepper};
use crate::model::{norm_sq, StateVec, SystemParams};
use crate::noise::IncrementSource;
use crate::quadrature::InvariantCdf;
use crate::scalar::Real;
use crate::stats::{ks_distance_from_cdf_values, mean_and_stderr};

/// Default number of steps between tangent renormalizations.
pub const DEFAULT_RENORM_EVERY: usize = 100;

/// A tangent vector stored as a unit direction plus accumulated log-growth.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec<T> {
    direction: StateVec<T>,
    log_norm_accum: T,
}

impl<T: Real> TangentVec<T> {
    pub fn new(v0: &StateVec<T>) -> Result<Self> {
        let norm = v0.norm();
        if !(norm > T::zero()) {
            return Err(invalid("v0", "tangent vector must be non-zero"));
        }
        Ok(Self { direction: v0.scaled(T::one() / norm), log_norm_accum: T::zero() })
    }

    pub fn direction(&self) -> &StateVec<T> {
        &self.direction
    }

    pub fn log_norm_accum(&self) -> T {
        self.log_norm_accum
    }

    /// Rescales the direction to unit length; returns `ln |v|` before rescaling.
    /// The growth is added to the accumulator only when `accumulate` is set.
    pub fn renormalize(&mut self, accumulate: bool) -> T {
        let norm = self.direction.norm();
        let inv = T::one() / norm;
        self.direction.as_mut_slice().iter_mut().for_each(|c| *c = *c * inv);
        let growth = norm.ln();
        if accumulate {
            self.log_norm_accum = self.log_norm_accum + growth;
        }
        growth
    }

    pub fn reset_accum(&mut self) {
        self.log_norm_accum = T::zero();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ErgodicN1,
    Benettin,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ErgodicN1 => "ergodic_n1",
            Method::Benettin => "benettin",
        }
    }
}

/// Run lengths and randomness shared by the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSpec<T> {
    pub seed: u64,
    pub burn_in: T,
    pub horizon: T,
    pub n_traj: usize,
}

impl<T: Real> McSpec<T> {
    /// Burn-in defaults to 10% of the horizon.
    pub fn new(seed: u64, horizon: T, n_traj: usize) -> Self {
        Self { seed, burn_in: horizon / T::lit(10.0), horizon, n_traj }
    }

    pub fn with_burn_in(mut self, burn_in: T) -> Self {
        self.burn_in = burn_in;
        self
    }

    fn validate(&self, cfg: &SolverConfig<T>) -> Result<(i64, i64)> {
        if self.n_traj < 2 {
            return Err(invalid("n_traj", "need at least 2 trajectories for an across-trajectory stderr"));
        }
        if !(self.burn_in >= T::zero()) || !(self.horizon > self.burn_in) {
            return Err(invalid("horizon", format!("need 0 <= burn_in < horizon, got {} and {}", self.burn_in, self.horizon)));
        }
        Ok((cfg.cell_of(self.burn_in)?, cfg.cell_of(self.horizon)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate<T> {
    pub value: T,
    pub stderr: T,
    pub method: Method,
    pub burn_in: T,
    pub horizon: T,
    pub n_trajectories: usize,
    /// Per-trajectory estimates in trajectory order.
    pub per_trajectory: Vec<T>,
    /// Renormalization segments whose growth exceeded `exp(dt_seg (1 + 5 dt))`
    /// (Benettin only).
    pub gronwall_violations: usize,
    /// Largest `ln |v| / dt_seg` over all segments (Benettin only).
    pub max_growth_rate: T,
}

fn source(mc_seed: u64, stream: usize, p: &SystemParams<impl Real>, dt: f64) -> Result<IncrementSource> {
    IncrementSource::new(mc_seed, stream as u64, p.n, dt)
}

fn default_start<T: Real>(p: &SystemParams<T>, x0: Option<&StateVec<T>>) -> Result<StateVec<T>> {
    let x0 = x0.cloned().unwrap_or_else(|| StateVec::basis(p.d, 0));
    if x0.dim() != p.d {
        return Err(invalid("x0", "dimension mismatch"));
    }
    Ok(x0)
}

/// Time average of `1 - |phi_s|^2` over `[burn_in, horizon]` (trapezoidal),
/// averaged over `n_traj` independent trajectories started at `x0` (default
/// `e_1`). Requires `n = 1` and `x0` in `M`.
pub fn ergodic_lambda_n1<T: Real>(
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    mc: &McSpec<T>,
    x0: Option<&StateVec<T>>,
) -> Result<LyapunovEstimate<T>> {
    if p.n != 1 {
        return Err(invalid("n", "the ergodic identity needs n = 1"));
    }
    let (kb, ke) = mc.validate(cfg)?;
    let x0 = default_start(p, x0)?;
    if !x0.in_subspace(p.n) {
        return Err(invalid("x0", "start must lie in M"));
    }
    let dt = cfg.dt;
    let half = T::lit(0.5);
    let per: Vec<T> = (0..mc.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut stepper = Stepper::new(*p, *cfg, source(mc.seed, i, p, dt.to_f64_lossy())?)?;
            let mut x = x0.as_slice().to_vec();
            let mut integral = T::zero();
            for k in 0..ke {
                let a_before = T::one() - stepper.advance(&mut x, k)?;
                if k >= kb {
                    let a_after = T::one() - norm_sq(&x);
                    integral = integral + half * dt * (a_before + a_after);
                }
            }
            Ok(integral / (mc.horizon - mc.burn_in))
        })
        .collect::<Result<Vec<T>>>()?;
    let (value, stderr) = mean_and_stderr(&per);
    Ok(LyapunovEstimate {
        value,
        stderr,
        method: Method::ErgodicN1,
        burn_in: mc.burn_in,
        horizon: mc.horizon,
        n_trajectories: mc.n_traj,
        per_trajectory: per,
        gronwall_violations: 0,
        max_growth_rate: T::nan(),
    })
}

struct BenettinPath<T> {
    exponent: T,
    violations: usize,
    max_rate: T,
}

/// Tangent-renormalization estimate of the top exponent.
///
/// State and tangent are stepped together (the tangent with the Jacobian at
/// the pre-step state). Every `renorm_every` steps, and at the burn-in
/// boundary, `ln |v|` is recorded and `v` rescaled to unit length; only
/// segments after burn-in contribute.
#[allow(clippy::too_many_arguments)]
pub fn benettin_lambda<T: Real>(
    p: &SystemParams<T>,
    x0: Option<&StateVec<T>>,
    v0: &StateVec<T>,
    cfg: &SolverConfig<T>,
    mc: &McSpec<T>,
    renorm_every: usize,
) -> Result<LyapunovEstimate<T>> {
    let (kb, ke) = mc.validate(cfg)?;
    if renorm_every == 0 {
        return Err(invalid("renorm_every", "must be >= 1"));
    }
    let x0 = default_start(p, x0)?;
    if v0.dim() != p.d {
        return Err(invalid("v0", "dimension mismatch"));
    }
    TangentVec::new(v0)?;
    let dt = cfg.dt;
    let slack = T::one() + T::lit(5.0) * dt;
    let upper = T::max_value().sqrt();
    let lower = T::min_positive_value().sqrt();
    let paths: Vec<BenettinPath<T>> = (0..mc.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut stepper = Stepper::new(*p, *cfg, source(mc.seed, i, p, dt.to_f64_lossy())?)?;
            let mut x = x0.as_slice().to_vec();
            let mut tangent = TangentVec::new(v0)?;
            let mut scratch = vec![T::zero(); p.d];
            let mut since = 0usize;
            let mut violations = 0;
            let mut max_rate = T::neg_infinity();
            for k in 0..ke {
                step_variational_in_place(&x, tangent.direction.as_mut_slice(), &mut scratch, dt);
                stepper.advance(&mut x, k)?;
                since += 1;
                let boundary = k + 1 == kb || k + 1 == ke;
                if since == renorm_every || boundary {
                    let norm = tangent.direction.norm();
                    if !(norm < upper && norm > lower) {
                        return Err(Error::TangentRange { time: cfg.time_of(k + 1).to_f64_lossy(), norm: norm.to_f64_lossy() });
                    }
                    let seg = T::from_usize_lossy(since) * dt;
                    let growth = tangent.renormalize(k + 1 > kb);
                    if growth > seg * slack {
                        violations += 1;
                    }
                    max_rate = max_rate.max(growth / seg);
                    since = 0;
                }
            }
            Ok(BenettinPath { exponent: tangent.log_norm_accum() / (mc.horizon - mc.burn_in), violations, max_rate })
        })
        .collect::<Result<Vec<_>>>()?;
    let per: Vec<T> = paths.iter().map(|p| p.exponent).collect();
    let (value, stderr) = mean_and_stderr(&per);
    Ok(LyapunovEstimate {
        value,
        stderr,
        method: Method::Benettin,
        burn_in: mc.burn_in,
        horizon: mc.horizon,
        n_trajectories: mc.n_traj,
        per_trajectory: per,
        gronwall_violations: paths.iter().map(|p| p.violations).sum(),
        max_growth_rate: paths.iter().fold(T::neg_infinity(), |m, p| m.max(p.max_rate)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentIdentity<T> {
    /// `max |phi^(d) - exp(I_t)| / phi^(d)` over recorded times.
    pub residual: T,
    /// Largest value the last coordinate reached.
    pub max_last_component: T,
}

/// Checks `phi_t^(d) = exp(int_0^t (1 - |phi_s|^2) ds)` along the path from
/// `e_d`, with the integral accumulated by the trapezoidal rule on the same
/// grid as the flow. Sampled every `record_stride` steps; needs `n < d`.
pub fn component_identity_residual<T: Real>(
    p: &SystemParams<T>,
    src: &IncrementSource,
    cfg: &SolverConfig<T>,
    t: T,
) -> Result<ComponentIdentity<T>> {
    if p.n >= p.d {
        return Err(invalid("n", "the component identity needs a noiseless coordinate (n < d)"));
    }
    let ke = cfg.cell_of(t)?;
    let mut stepper = Stepper::new(*p, *cfg, *src)?;
    let mut x = StateVec::<T>::last_basis(p.d).into_vec();
    let last = p.d - 1;
    let half = T::lit(0.5);
    let mut integral = T::zero();
    let mut residual = T::zero();
    let mut max_last = x[last];
    for k in 0..ke {
        let a_before = T::one() - stepper.advance(&mut x, k)?;
        let a_after = T::one() - norm_sq(&x);
        integral = integral + half * cfg.dt * (a_before + a_after);
        let y = x[last];
        if !(y > T::zero()) {
            return Err(Error::SignViolation { time: cfg.time_of(k + 1).to_f64_lossy(), value: y.to_f64_lossy() });
        }
        max_last = max_last.max(y);
        if ((k + 1) as usize).is_multiple_of(cfg.record_stride) || k + 1 == ke {
            residual = residual.max((y - integral.exp()).abs() / y);
        }
    }
    Ok(ComponentIdentity { residual, max_last_component: max_last })
}

/// KS distance between the first coordinate of n = 1 trajectories (sampled
/// every `thin` steps over `[burn_in, horizon]`, all trajectories pooled) and
/// the invariant law on `M`.
pub fn stationarity_ks<T: Real>(
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    mc: &McSpec<T>,
    thin: usize,
    x0: Option<&StateVec<T>>,
) -> Result<T> {
    if p.n != 1 {
        return Err(invalid("n", "stationarity check is implemented for n = 1"));
    }
    if thin == 0 {
        return Err(invalid("thin", "must be >= 1"));
    }
    if !(mc.horizon > mc.burn_in) || mc.n_traj == 0 {
        return Err(invalid("horizon", "need burn_in < horizon and n_traj >= 1"));
    }
    let (kb, ke) = (cfg.cell_of(mc.burn_in)?, cfg.cell_of(mc.horizon)?);
    let x0 = default_start(p, x0)?;
    let dt = cfg.dt.to_f64_lossy();
    let samples: Vec<Vec<T>> = (0..mc.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut stepper = Stepper::new(*p, *cfg, source(mc.seed, i, p, dt)?)?;
            let mut x = x0.as_slice().to_vec();
            let mut out = Vec::with_capacity(((ke - kb) as usize) / thin + 1);
            for k in 0..ke {
                stepper.advance(&mut x, k)?;
                if k + 1 >= kb && ((k + 1 - kb) as usize).is_multiple_of(thin) {
                    out.push(x[0]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<T> = samples.into_iter().flatten().collect();
    let cdf = InvariantCdf::new(p.sigma, T::lit(1e-10).max(T::epsilon() * T::lit(100.0)))?;
    Ok(ks_distance_from_cdf_values(&cdf.eval_many(&pooled)?))
}
