//! Time stepping for `dX = b(X) dt + sigma E dW`, where `E` embeds the noise
//! into the first `n` coordinates, plus the variational equation and the
//! deterministic controlled-path runs.
//!
//! Time is discretized on the absolute grid `t_k = k dt`, `k` in `Z`; step
//! `k` maps `t_k` to `t_{k+1}` using increment `k` of the source. Restarting a
//! run from an earlier time therefore reuses the same increments on the
//! overlap.

use crate::error::{invalid, Error, Result};
use crate::model::{drift_into, jacobian_apply_into, StateVec, SystemParams};
use crate::noise::IncrementSource;
use crate::scalar::Real;

/// States with norm beyond this are treated as a numerical blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Drift increment `dt b / (1 + dt |b|)`.
    #[default]
    TamedEm,
    /// Plain Euler-Maruyama; only for short horizons.
    Em,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::TamedEm => "tamed_em",
            Scheme::Em => "em",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tamed_em" => Ok(Scheme::TamedEm),
            "em" => Ok(Scheme::Em),
            other => Err(invalid("scheme", format!("unknown scheme `{other}` (expected tamed_em or em)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub dt: T,
    pub scheme: Scheme,
    pub record_stride: usize,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(dt: T) -> Result<Self> {
        Self::with(dt, Scheme::TamedEm, 1)
    }

    pub fn with(dt: T, scheme: Scheme, record_stride: usize) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(invalid("dt", format!("need finite dt > 0, got {dt}")));
        }
        if record_stride == 0 {
            return Err(invalid("record_stride", "must be >= 1"));
        }
        Ok(Self { dt, scheme, record_stride })
    }

    pub fn with_stride(mut self, record_stride: usize) -> Result<Self> {
        if record_stride == 0 {
            return Err(invalid("record_stride", "must be >= 1"));
        }
        self.record_stride = record_stride;
        Ok(self)
    }

    /// Index of the grid cell starting at `t`; `t` must lie on the grid.
    pub fn cell_of(&self, t: T) -> Result<i64> {
        let eps = T::epsilon().to_f64_lossy();
        let dt = self.dt.to_f64_lossy();
        let t = t.to_f64_lossy();
        let k = (t / dt).round();
        // exact multiples up to rounding of the scalar type
        let slack = (1e-9 * dt).max(8.0 * eps * t.abs());
        if !k.is_finite() || (k * dt - t).abs() > slack {
            return Err(Error::OffGrid { time: t, dt });
        }
        Ok(k as i64)
    }

    pub fn time_of(&self, k: i64) -> T {
        T::from_i64(k).expect("cell index representable") * self.dt
    }
}

/// Recorded states of one run, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    d: usize,
    times: Vec<T>,
    data: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    fn with_capacity(d: usize, rows: usize) -> Self {
        Self { d, times: Vec::with_capacity(rows), data: Vec::with_capacity(rows * d) }
    }

    fn push(&mut self, t: T, x: &[T]) {
        self.times.push(t);
        self.data.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn last(&self) -> Option<&[T]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }
}

/// Reusable stepping kernel; owns scratch buffers so the inner loop does not
/// allocate.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    params: SystemParams<T>,
    cfg: SolverConfig<T>,
    src: IncrementSource,
    drift: Vec<T>,
    noise: Vec<f64>,
}

impl<T: Real> Stepper<T> {
    pub fn new(params: SystemParams<T>, cfg: SolverConfig<T>, src: IncrementSource) -> Result<Self> {
        if src.n() != params.n {
            return Err(invalid("n", format!("source has {} noise components, system has {}", src.n(), params.n)));
        }
        let (sdt, cdt) = (src.dt(), cfg.dt.to_f64_lossy());
        let tol = (4.0 * T::epsilon().to_f64_lossy()).max(1e-12);
        if (sdt - cdt).abs() > tol * sdt {
            return Err(Error::DtMismatch { source_dt: sdt, solver_dt: cdt });
        }
        Ok(Self { params, cfg, src, drift: vec![T::zero(); params.d], noise: vec![0.0; params.n] })
    }

    pub fn params(&self) -> &SystemParams<T> {
        &self.params
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    /// Deterministic part of one step: writes `x + drift increment` over `x`.
    /// Returns `|x|^2` before the step.
    #[inline]
    fn drift_step(&mut self, x: &mut [T]) -> T {
        let r2 = drift_into(x, &mut self.drift);
        let dt = self.cfg.dt;
        let factor = match self.cfg.scheme {
            Scheme::Em => dt,
            Scheme::TamedEm => {
                // |b(x)| = |1 - |x|^2| |x|
                let b_norm = (T::one() - r2).abs() * r2.sqrt();
                dt / (T::one() + dt * b_norm)
            }
        };
        for (xi, &bi) in x.iter_mut().zip(&self.drift) {
            *xi = *xi + factor * bi;
        }
        r2
    }

    /// Advances `x` in place across cell `k`. Returns `|x|^2` at the start of
    /// the step, which callers use for time integrals.
    #[inline]
    pub fn advance(&mut self, x: &mut [T], k: i64) -> Result<T> {
        let r2 = self.drift_step(x);
        let sigma = self.params.sigma;
        if sigma != T::zero() {
            self.src.fill_increment(k, &mut self.noise);
            for (xi, &w) in x.iter_mut().zip(&self.noise) {
                *xi = *xi + sigma * T::lit(w);
            }
        }
        let norm_sq = crate::model::norm_sq(x);
        if !(norm_sq <= T::lit(DIVERGENCE_THRESHOLD * DIVERGENCE_THRESHOLD)) {
            return Err(Error::Divergence {
                time: self.cfg.time_of(k + 1).to_f64_lossy(),
                norm: norm_sq.sqrt().to_f64_lossy(),
            });
        }
        Ok(r2)
    }
}

/// One step of the scheme from `t_k` to `t_{k+1}`.
pub fn step<T: Real>(
    x: &StateVec<T>,
    k: i64,
    src: &IncrementSource,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<StateVec<T>> {
    check_dim(x, p)?;
    let mut stepper = Stepper::new(*p, *cfg, *src)?;
    let mut out = x.as_slice().to_vec();
    stepper.advance(&mut out, k)?;
    Ok(StateVec::from_vec_unchecked(out))
}

fn check_dim<T: Real>(x: &StateVec<T>, p: &SystemParams<T>) -> Result<()> {
    if x.dim() != p.d {
        return Err(invalid("x0", format!("state has dimension {}, system has d = {}", x.dim(), p.d)));
    }
    Ok(())
}

/// Integrates from `t_begin` to `t_end` on the absolute grid, recording the
/// initial state, every `record_stride`-th state and the final state.
pub fn simulate<T: Real>(
    x0: &StateVec<T>,
    src: &IncrementSource,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    t_begin: T,
    t_end: T,
) -> Result<Trajectory<T>> {
    check_dim(x0, p)?;
    let (k0, k1) = (cfg.cell_of(t_begin)?, cfg.cell_of(t_end)?);
    if k1 < k0 {
        return Err(invalid("t_end", "need t_begin <= t_end"));
    }
    let mut stepper = Stepper::new(*p, *cfg, *src)?;
    let steps = (k1 - k0) as usize;
    let mut traj = Trajectory::with_capacity(p.d, steps / cfg.record_stride + 2);
    let mut x = x0.as_slice().to_vec();
    traj.push(cfg.time_of(k0), &x);
    for (i, k) in (k0..k1).enumerate() {
        stepper.advance(&mut x, k)?;
        if (i + 1) % cfg.record_stride == 0 || k + 1 == k1 {
            traj.push(cfg.time_of(k + 1), &x);
        }
    }
    Ok(traj)
}

/// `v + dt Db(x) v`, one explicit step of the (noise-free) variational equation.
#[inline]
pub fn step_variational_in_place<T: Real>(x: &[T], v: &mut [T], scratch: &mut [T], dt: T) {
    jacobian_apply_into(x, v, scratch);
    for (vi, &ji) in v.iter_mut().zip(scratch.iter()) {
        *vi = *vi + dt * ji;
    }
}

pub fn step_variational<T: Real>(x: &StateVec<T>, v: &StateVec<T>, dt: T) -> StateVec<T> {
    let mut out = v.as_slice().to_vec();
    let mut scratch = vec![T::zero(); v.dim()];
    step_variational_in_place(x.as_slice(), &mut out, &mut scratch, dt);
    StateVec::from_vec_unchecked(out)
}

/// Deterministic control `sigma du/dt` substituted into `dz = b(z) dt + sigma du`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSpec<T> {
    /// Steers along the segment `psi(t) = from + (t / t0)(to - from)`:
    /// `sigma du/dt = psi'(t) - b(psi(t))`, so `z = psi` on `[0, t0]` when
    /// started at `from`. After `t0` the control is switched off.
    LineTo { from: StateVec<T>, to: StateVec<T>, t0: T },
    /// Cancels the drift at `target`: `sigma du/dt = -b(target)`.
    HoldAt { target: StateVec<T> },
}

impl<T: Real> ControlSpec<T> {
    fn validate(&self, p: &SystemParams<T>) -> Result<()> {
        match self {
            ControlSpec::LineTo { from, to, t0 } => {
                if !(*t0 > T::zero()) {
                    return Err(invalid("t0", "line_to needs t0 > 0"));
                }
                if from.dim() != p.d || to.dim() != p.d {
                    return Err(invalid("control", "endpoint dimension mismatch"));
                }
            }
            ControlSpec::HoldAt { target } => {
                if target.dim() != p.d {
                    return Err(invalid("control", "target dimension mismatch"));
                }
            }
        }
        Ok(())
    }

    /// Writes `sigma du/dt` at time `t` into `out`.
    fn control_into(&self, t: T, out: &mut [T]) {
        match self {
            ControlSpec::LineTo { from, to, t0 } => {
                if t >= *t0 {
                    out.iter_mut().for_each(|o| *o = T::zero());
                    return;
                }
                let s = t / *t0;
                let psi: Vec<T> = from.as_slice().iter().zip(to.as_slice()).map(|(&a, &b)| a + s * (b - a)).collect();
                drift_into(&psi, out);
                for ((o, &a), &b) in out.iter_mut().zip(from.as_slice()).zip(to.as_slice()) {
                    *o = (b - a) / *t0 - *o;
                }
            }
            ControlSpec::HoldAt { target } => {
                drift_into(target.as_slice(), out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
        }
    }
}

/// Integrates the controlled ODE `z' = b(z) + sigma du/dt` from `t = 0` to
/// `t_end`, applying the configured scheme to the whole right-hand side. With
/// taming this keeps `hold_at` targets exact discrete fixed points.
///
/// Endpoints and targets off `M` are accepted; the control then has
/// components outside the range of `E` and is no longer a noise path.
pub fn simulate_controlled<T: Real>(
    spec: &ControlSpec<T>,
    x0: &StateVec<T>,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    t_end: T,
) -> Result<Trajectory<T>> {
    check_dim(x0, p)?;
    if !(p.sigma > T::zero()) {
        return Err(invalid("sigma", "controlled paths are defined for sigma > 0"));
    }
    spec.validate(p)?;
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(invalid("t_end", "need finite t_end >= 0"));
    }
    // no noise is read, so t_end may fall between grid points; the last step
    // is then shortened to land on it
    let (full, rest) = match cfg.cell_of(t_end) {
        Ok(k) => (k, T::zero()),
        Err(_) => {
            let k = (t_end / cfg.dt).floor();
            (k.to_i64().expect("step count fits i64"), t_end - k * cfg.dt)
        }
    };
    let total = full + i64::from(rest > T::zero());
    let mut control = vec![T::zero(); p.d];
    let mut field = vec![T::zero(); p.d];
    let mut x = x0.as_slice().to_vec();
    let mut traj = Trajectory::with_capacity(p.d, total as usize / cfg.record_stride + 2);
    traj.push(T::zero(), &x);
    for k in 0..total {
        let t = cfg.time_of(k);
        let h = if k < full { cfg.dt } else { rest };
        spec.control_into(t, &mut control);
        drift_into(&x, &mut field);
        for (f, &c) in field.iter_mut().zip(&control) {
            *f = *f + c;
        }
        let factor = match cfg.scheme {
            Scheme::Em => h,
            Scheme::TamedEm => h / (T::one() + h * crate::model::norm_sq(&field).sqrt()),
        };
        for (xi, &f) in x.iter_mut().zip(&field) {
            *xi = *xi + factor * f;
        }
        if ((k + 1) as usize).is_multiple_of(cfg.record_stride) || k + 1 == total {
            traj.push(if k < full { cfg.time_of(k + 1) } else { t_end }, &x);
        }
    }
    Ok(traj)
}
