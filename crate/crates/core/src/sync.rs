//! Synchronization diagnostics for common-noise ensembles.
//!
//! All members of an ensemble are driven by stream 0 of one master seed, i.e.
//! by the same Brownian path, and differ only in their initial condition.
//! Diameters are exact maximal pairwise distances.

use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::integrator::{simulate, SolverConfig, Stepper, Trajectory};
use crate::lyapunov::{benettin_lambda, ergodic_lambda_n1, McSpec, DEFAULT_RENORM_EVERY};
use crate::model::{distance, StateVec, SystemParams};
use crate::noise::{mix64, IncrementSource};
use crate::quadrature::lambda_top_quad;
use crate::scalar::Real;
use crate::stats::median;

/// Largest ensemble for which diameters are computed.
pub const MAX_ENSEMBLE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling<T> {
    SphereSurface,
    BallUniform,
    Pair(StateVec<T>, StateVec<T>),
}

/// Initial conditions of an ensemble: `count` points on or in the ball
/// `B(center, radius)`, or an explicit pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec<T> {
    pub center: StateVec<T>,
    pub radius: T,
    pub count: usize,
    pub sampling: Sampling<T>,
    /// Sample only along the first `n` coordinates, keeping the ensemble in
    /// `center + M`.
    pub restrict_to_m: bool,
}

impl<T: Real> EnsembleSpec<T> {
    pub fn ball(center: StateVec<T>, radius: T, count: usize) -> Self {
        Self { center, radius, count, sampling: Sampling::BallUniform, restrict_to_m: false }
    }

    pub fn pair(x: StateVec<T>, y: StateVec<T>) -> Self {
        let center = StateVec::new(x.as_slice().iter().zip(y.as_slice()).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect())
            .expect("midpoint of finite points");
        let radius = (x.distance(&y) / T::lit(2.0)).max(T::min_positive_value());
        Self { center, radius, count: 2, sampling: Sampling::Pair(x, y), restrict_to_m: false }
    }

    /// The pair `(e_d, -e_d)`, whose last coordinates keep opposite signs.
    pub fn antipodal_last_axis(d: usize) -> Self {
        let e = StateVec::last_basis(d);
        Self::pair(e.clone(), e.scaled(-T::one()))
    }

    pub fn validate(&self, p: &SystemParams<T>) -> Result<()> {
        if self.count < 2 {
            return Err(invalid("count", "ensembles need at least 2 points"));
        }
        if self.count > MAX_ENSEMBLE {
            return Err(invalid("count", format!("at most {MAX_ENSEMBLE} points")));
        }
        if !(self.radius > T::zero()) {
            return Err(invalid("radius", "must be > 0"));
        }
        if self.center.dim() != p.d {
            return Err(invalid("center", format!("dimension {} but d = {}", self.center.dim(), p.d)));
        }
        if let Sampling::Pair(x, y) = &self.sampling {
            if x.dim() != p.d || y.dim() != p.d {
                return Err(invalid("pair", "dimension mismatch"));
            }
            if self.count != 2 {
                return Err(invalid("count", "pair sampling has exactly 2 points"));
            }
        }
        Ok(())
    }

    /// Deterministic initial conditions for `seed`.
    pub fn initial_points(&self, p: &SystemParams<T>, seed: u64) -> Result<Vec<StateVec<T>>> {
        self.validate(p)?;
        if let Sampling::Pair(x, y) = &self.sampling {
            return Ok(vec![x.clone(), y.clone()]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5EED_0F_E45E_4B1E));
        let dim = if self.restrict_to_m { p.n } else { p.d };
        let mut points = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let dir: Vec<f64> = loop {
                let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                if g.iter().any(|&v: &f64| v != 0.0) {
                    break g;
                }
            };
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = match self.sampling {
                Sampling::BallUniform => rng.gen::<f64>().powf(1.0 / dim as f64),
                _ => 1.0,
            };
            let mut x = self.center.clone();
            for (j, g) in dir.iter().enumerate() {
                let c = &mut x.as_mut_slice()[j];
                *c = *c + self.radius * T::lit(r * g / norm);
            }
            points.push(x);
        }
        Ok(points)
    }
}

/// Maximal pairwise distance; 0 for fewer than two points.
pub fn diameter<T: Real>(points: &[&[T]]) -> T {
    let mut best = T::zero();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(distance(points[i], points[j]));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Synchronizing,
    NonSynchronizing,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Synchronizing => "synchronizing",
            Verdict::NonSynchronizing => "non_synchronizing",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synchronizing" => Ok(Verdict::Synchronizing),
            "non_synchronizing" => Ok(Verdict::NonSynchronizing),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(invalid("verdict", format!("unknown verdict `{other}`"))),
        }
    }
}

/// Finite-horizon classification of the final-diameter distribution:
/// synchronizing if the median final diameter is at most `sync_ratio` times
/// the initial diameter, non-synchronizing if it is at least `nosync_ratio`
/// times it, inconclusive otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictRule<T> {
    pub sync_ratio: T,
    pub nosync_ratio: T,
}

impl<T: Real> Default for VerdictRule<T> {
    fn default() -> Self {
        Self { sync_ratio: T::lit(1e-3), nosync_ratio: T::lit(0.05) }
    }
}

impl<T: Real> VerdictRule<T> {
    pub fn classify_median(&self, median_final: T, initial: T) -> Verdict {
        if median_final <= self.sync_ratio * initial {
            Verdict::Synchronizing
        } else if median_final >= self.nosync_ratio * initial {
            Verdict::NonSynchronizing
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn classify(&self, final_diameters: &[T], initial: T) -> Verdict {
        self.classify_median(median(final_diameters), initial)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport<T> {
    pub times: Vec<T>,
    /// Median over seeds of the diameter at each recorded time.
    pub median_diameters: Vec<T>,
    /// Maximum over seeds of the diameter at each recorded time.
    pub max_diameters: Vec<T>,
    /// Final diameter of every seed, in seed order.
    pub final_diameters: Vec<T>,
    /// Median initial diameter over seeds.
    pub initial_diameter: T,
    pub verdict: Verdict,
    /// Diameter below which the ensemble counts as synchronized.
    pub threshold: T,
    pub seeds_used: usize,
}

/// Derived seed of the `i`-th repetition of an experiment.
pub fn seed_for(master: u64, i: usize) -> u64 {
    master.wrapping_add(i as u64)
}

/// Diameter time series of one seed: evolves all members on stream 0 of
/// `seed` from `t_begin` to `t_end`.
fn diameter_series<T: Real>(
    spec: &EnsembleSpec<T>,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    seed: u64,
    t_begin: T,
    t_end: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let points = spec.initial_points(p, seed)?;
    let src = IncrementSource::new(seed, 0, p.n, cfg.dt.to_f64_lossy())?;
    let trajectories: Vec<Trajectory<T>> =
        points.par_iter().map(|x0| simulate(x0, &src, p, cfg, t_begin, t_end)).collect::<Result<_>>()?;
    let rows = trajectories[0].len();
    let diams = (0..rows)
        .map(|r| {
            let states: Vec<&[T]> = trajectories.iter().map(|tr| tr.state(r)).collect();
            diameter(&states)
        })
        .collect();
    Ok((trajectories[0].times().to_vec(), diams))
}

/// Diameter of a common-noise ensemble over `[0, t_end]` for one seed.
pub fn ensemble_diameter<T: Real>(
    spec: &EnsembleSpec<T>,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    seed: u64,
    t_end: T,
) -> Result<SyncReport<T>> {
    ensemble_diameter_seeds(spec, p, cfg, &[seed], t_end, &VerdictRule::default())
}

/// [`ensemble_diameter`] repeated over several seeds, aggregated per recorded
/// time by median and maximum.
pub fn ensemble_diameter_seeds<T: Real>(
    spec: &EnsembleSpec<T>,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    seeds: &[u64],
    t_end: T,
    rule: &VerdictRule<T>,
) -> Result<SyncReport<T>> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    let series: Vec<(Vec<T>, Vec<T>)> =
        seeds.par_iter().map(|&s| diameter_series(spec, p, cfg, s, T::zero(), t_end)).collect::<Result<_>>()?;
    let times = series[0].0.clone();
    let column = |r: usize| series.iter().map(|s| s.1[r]).collect::<Vec<T>>();
    let median_diameters: Vec<T> = (0..times.len()).map(|r| median(&column(r))).collect();
    let max_diameters: Vec<T> =
        (0..times.len()).map(|r| column(r).into_iter().fold(T::zero(), |a, b| a.max(b))).collect();
    let final_diameters = column(times.len() - 1);
    let initial = median(&column(0));
    Ok(SyncReport {
        verdict: rule.classify(&final_diameters, initial),
        threshold: rule.sync_ratio * initial,
        times,
        median_diameters,
        max_diameters,
        final_diameters,
        initial_diameter: initial,
        seeds_used: seeds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackRow<T> {
    pub t: T,
    pub median_diameter: T,
    pub max_diameter: T,
}

/// For each `T` in `t_list`, evolves the ensemble from time `-T` to `0` and
/// records the diameter at time 0. A given seed fixes one Brownian path on the
/// absolute grid, so all `T` see the same increments on shared cells.
pub fn pullback_diameter<T: Real>(
    spec: &EnsembleSpec<T>,
    p: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    seeds: &[u64],
    t_list: &[T],
) -> Result<Vec<PullbackRow<T>>> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    if t_list.iter().any(|&t| !(t >= T::zero())) || t_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("T_list", "must be non-negative and strictly increasing"));
    }
    t_list
        .iter()
        .map(|&t| {
            let finals: Vec<T> = seeds
                .par_iter()
                .map(|&s| diameter_series(spec, p, cfg, s, -t, T::zero()).map(|(_, d)| *d.last().expect("non-empty")))
                .collect::<Result<_>>()?;
            Ok(PullbackRow {
                t,
                median_diameter: median(&finals),
                max_diameter: finals.iter().fold(T::zero(), |a, &b| a.max(b)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck<T> {
    pub trials: usize,
    /// Largest pair distance at `t = 0.5`.
    pub max_at_half: T,
    /// Largest distance observed after a pair first came within 4, up to `t = 2`.
    pub max_after_entry: T,
}

/// Samples pairs with `|x|, |y| <= 8` and `|x - y| <= 8`, evolves each pair
/// under common noise and reports the distance at `t = 0.5` together with
/// the largest distance seen, up to `t = 2`, after the pair first came within
/// distance 4. Trial `i` uses noise stream `i` of `seed`.
pub fn pairwise_bound_check<T: Real>(p: &SystemParams<T>, cfg: &SolverConfig<T>, seed: u64, trials: usize) -> Result<BoundCheck<T>> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    let (k_half, k_end) = (cfg.cell_of(T::lit(0.5))?, cfg.cell_of(T::lit(2.0))?);
    let four = T::lit(4.0);
    let results: Vec<(T, T)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (x0, y0) = sample_bounded_pair(p, seed, i);
            let src = IncrementSource::new(seed, i as u64, p.n, cfg.dt.to_f64_lossy())?;
            let mut sx = Stepper::new(*p, *cfg, src)?;
            let mut sy = Stepper::new(*p, *cfg, src)?;
            let (mut x, mut y) = (x0, y0);
            let mut at_half = distance(&x, &y);
            let mut entered = at_half <= four;
            let mut after = if entered { at_half } else { T::zero() };
            for k in 0..k_end {
                sx.advance(&mut x, k)?;
                sy.advance(&mut y, k)?;
                let dist = distance(&x, &y);
                if k + 1 == k_half {
                    at_half = dist;
                }
                if entered {
                    after = after.max(dist);
                } else if dist <= four {
                    entered = true;
                    after = dist;
                }
            }
            Ok((at_half, after))
        })
        .collect::<Result<_>>()?;
    Ok(BoundCheck {
        trials,
        max_at_half: results.iter().fold(T::zero(), |m, r| m.max(r.0)),
        max_after_entry: results.iter().fold(T::zero(), |m, r| m.max(r.1)),
    })
}

/// Rejection-samples `x, y` uniform in the ball of radius 8 with `|x - y| <= 8`.
fn sample_bounded_pair<T: Real>(p: &SystemParams<T>, seed: u64, trial: usize) -> (Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(trial as u64 + 0xB0D)));
    let ball = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..p.d).map(|_| rng.gen_range(-8.0..8.0)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() <= 64.0 {
            break v;
        }
    };
    loop {
        let x = ball(&mut rng);
        let y = ball(&mut rng);
        if distance(&x, &y) <= 8.0 {
            return (x.into_iter().map(T::lit).collect(), y.into_iter().map(T::lit).collect());
        }
    }
}

/// Settings for [`sync_scan`] beyond the noise grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings<T> {
    pub seed: u64,
    pub n_seeds: usize,
    pub t_end: T,
    pub ensemble: EnsembleSpec<T>,
    pub mc: McSpec<T>,
    pub quad_tol: T,
    pub rule: VerdictRule<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow<T> {
    pub sigma: T,
    pub n: usize,
    pub d: usize,
    pub lambda_quad: Option<T>,
    pub lambda_mc: Option<T>,
    pub lambda_mc_stderr: Option<T>,
    pub median_final_diameter: Option<T>,
    pub verdict: Option<Verdict>,
    /// Failures of any stage for this sigma; the scan continues regardless.
    pub errors: Vec<String>,
}

/// For each sigma: quadrature exponent, Monte Carlo exponent (ergodic for
/// n = 1, Benettin otherwise), final ensemble diameters over `n_seeds` seeds
/// and the resulting verdict. One row per sigma, in grid order.
pub fn sync_scan<T: Real>(
    sigma_grid: &[T],
    template: &SystemParams<T>,
    cfg: &SolverConfig<T>,
    settings: &ScanSettings<T>,
) -> Result<Vec<ScanRow<T>>> {
    if sigma_grid.is_empty() {
        return Err(invalid("sigma_grid", "must not be empty"));
    }
    if sigma_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("sigma_grid", "must be strictly increasing"));
    }
    if settings.n_seeds == 0 {
        return Err(invalid("n_seeds", "need at least one seed"));
    }
    let seeds: Vec<u64> = (0..settings.n_seeds).map(|i| seed_for(settings.seed, i)).collect();
    Ok(sigma_grid
        .iter()
        .map(|&sigma| {
            let mut row = ScanRow {
                sigma,
                n: template.n,
                d: template.d,
                lambda_quad: None,
                lambda_mc: None,
                lambda_mc_stderr: None,
                median_final_diameter: None,
                verdict: None,
                errors: Vec::new(),
            };
            let p = match template.with_sigma(sigma) {
                Ok(p) => p,
                Err(e) => {
                    row.errors.push(e.to_string());
                    return row;
                }
            };
            match lambda_top_quad(p.n, sigma, settings.quad_tol) {
                Ok(q) => row.lambda_quad = Some(q.value),
                Err(e) => row.errors.push(format!("quadrature: {e}")),
            }
            let mc = if p.n == 1 {
                ergodic_lambda_n1(&p, cfg, &settings.mc, None)
            } else {
                let v0 = StateVec::new(vec![T::one(); p.d]).expect("finite");
                benettin_lambda(&p, None, &v0, cfg, &settings.mc, DEFAULT_RENORM_EVERY)
            };
            match mc {
                Ok(est) => {
                    row.lambda_mc = Some(est.value);
                    row.lambda_mc_stderr = Some(est.stderr);
                }
                Err(e) => row.errors.push(format!("lyapunov: {e}")),
            }
            match ensemble_diameter_seeds(&settings.ensemble, &p, cfg, &seeds, settings.t_end, &settings.rule) {
                Ok(rep) => {
                    row.median_final_diameter = Some(median(&rep.final_diameters));
                    row.verdict = Some(rep.verdict);
                }
                Err(e) => row.errors.push(format!("sync: {e}")),
            }
            row
        })
        .collect())
}
