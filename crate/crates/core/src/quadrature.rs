//! Invariant-measure integrals on `M`: the normalization `Z_sigma`, the
//! Lyapunov integral `(1/Z) int (1 - |x|^2) rho(x) dx`, the n = 2 closed form
//! and the bisection for the critical noise strength of the n = 1 system.
//!
//! All integrals are reduced to the radial line and written with the peak
//! factor `exp(1 / (2 sigma^2))` pulled out,
//!
//! ```text
//! exp((2/s^2)(r^2/2 - r^4/4)) = exp(1/(2 s^2)) * exp(-(r^2 - 1)^2 / (2 s^2)),
//! ```
//!
//! so the factor cancels between numerator and normalization and small `sigma`
//! never overflows. The semi-infinite range is cut at a radius `R` with an
//! explicit tail bound; `[0, R]` is handled by globally adaptive
//! Gauss-Kronrod (7/15) quadrature whose error estimate is the difference of
//! the two nested rules.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Whether a Lyapunov integral equals the exponent or only bounds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accuracy {
    Exact,
    UpperBound,
}

impl Accuracy {
    pub fn as_str(self) -> &'static str {
        match self {
            Accuracy::Exact => "exact",
            Accuracy::UpperBound => "upper_bound",
        }
    }
}

/// A quadrature value with its error budget. Errors are absolute, in the units
/// of `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub abs_error_estimate: T,
    pub tail_bound: T,
    pub truncation_radius: T,
    pub accuracy: Accuracy,
}

impl<T: Real> QuadratureResult<T> {
    pub fn total_error(&self) -> T {
        self.abs_error_estimate + self.tail_bound
    }
}

/// Bracket around the sign change of `sigma -> lambda_top(n = 1, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaStarResult<T> {
    pub lower: T,
    pub upper: T,
    pub lambda_at_lower: T,
    pub lambda_at_upper: T,
    pub iterations: usize,
}

impl<T: Real> SigmaStarResult<T> {
    pub fn midpoint(&self) -> T {
        (self.lower + self.upper) / T::lit(2.0)
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

const MAX_SUBINTERVALS: usize = 20_000;

/// Abscissae/weights of the 15-point Kronrod rule and its embedded 7-point
/// Gauss rule on [-1, 1] (QUADPACK `qk15`).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod panel: `(kronrod, |kronrod - gauss|)`.
fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    (kronrod * half_len, ((kronrod - gauss) * half_len).abs())
}

/// Globally adaptive Gauss-Kronrod on `[a, b]`: bisects the panel with the
/// largest error estimate until the summed estimate is at most
/// `max(abs_tol, rel_tol * |value|)`. Returns `(value, error_estimate)`.
pub fn integrate_adaptive<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
) -> Result<(T, T)> {
    let (v0, e0) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    let (value, error) = loop {
        // re-summing avoids drift from incremental updates
        let value: T = panels.iter().map(|p| p.2).sum();
        let error: T = panels.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            return Ok((value, error));
        }
        if panels.len() >= MAX_SUBINTERVALS || !error.is_finite() {
            break (value, error);
        }
        let worst = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best })
            .0;
        let (lo, hi, _, _) = panels[worst];
        let mid = (lo + hi) / T::lit(2.0);
        if !(mid > lo && mid < hi) {
            break (value, error);
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        panels[worst] = (lo, mid, vl, el);
        panels.push((mid, hi, vr, er));
    };
    Err(Error::QuadratureNotConverged {
        tol: abs_tol.max(rel_tol * value.abs()).to_f64_lossy(),
        achieved: error.to_f64_lossy(),
        intervals: panels.len(),
    })
}

/// Surface area of the unit sphere in `R^n` (`A_1 = 2`, `A_2 = 2 pi`), via
/// `A_{n+2} = 2 pi A_n / n`.
pub fn sphere_area<T: Real>(n: usize) -> T {
    assert!(n >= 1, "sphere area needs n >= 1");
    let two_pi = T::lit(2.0) * T::PI();
    let mut k = if n % 2 == 1 { 1 } else { 2 };
    let mut area = if k == 1 { T::lit(2.0) } else { two_pi };
    while k < n {
        area = area * two_pi / T::from_usize_lossy(k);
        k += 2;
    }
    area
}

fn check_sigma_tol<T: Real>(sigma: T, tol: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("need sigma > 0, got {sigma}")));
    }
    if !(tol > T::zero()) || !tol.is_finite() {
        return Err(invalid("tol", format!("need tol > 0, got {tol}")));
    }
    Ok(())
}

/// Smallest `R > 1` with `(R^2 - 1)^2 / (2 sigma^2) >= 2 ln(1/tol) + n ln R + 50`.
pub fn truncation_radius<T: Real>(n: usize, sigma: T, tol: T) -> Result<T> {
    check_sigma_tol(sigma, tol)?;
    let budget = T::lit(2.0) * (T::one() / tol).ln().max(T::zero()) + T::lit(50.0);
    let nf = T::from_usize_lossy(n);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let g = |r: T| {
        let u = r * r - T::one();
        Ok(u * u / two_s2 - nf * r.ln() - budget)
    };
    let mut hi = T::lit(2.0);
    while g(hi)? < T::zero() {
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Err(Error::Overflow { what: "truncation radius" });
        }
    }
    // g(1) < 0 and g is increasing on (1, inf) once it turns positive
    let bracket = bisect(g, T::one(), hi, hi * T::epsilon() * T::lit(8.0), 400)?;
    Ok(bracket.upper)
}

/// Bound on `A_n int_R^inf r^m exp(-(r^2-1)^2 / (2 sigma^2)) dr`.
///
/// For `r >= R > 1`, `(r^2-1)^2 >= (R^2-1)^2 + 4R(R^2-1)(r-R)` and
/// `r^m <= R^m exp(m (r-R) / R)`, which leaves an exponential integral.
fn tail_bound<T: Real>(n: usize, m: usize, sigma: T, radius: T) -> T {
    let u = radius * radius - T::one();
    let kappa = T::lit(2.0) * radius * u / (sigma * sigma);
    let rate = kappa - T::from_usize_lossy(m) / radius;
    if !(rate > T::zero()) {
        return T::infinity();
    }
    let log_peak = -u * u / (T::lit(2.0) * sigma * sigma) + T::from_usize_lossy(m) * radius.ln();
    sphere_area::<T>(n) * log_peak.exp() / rate
}

/// Scaled radial weight `r^(n-1) exp(-(r^2-1)^2 / (2 sigma^2))`.
fn radial_weight<T: Real>(n: usize, sigma: T) -> impl Fn(T) -> T {
    let inv_two_s2 = T::one() / (T::lit(2.0) * sigma * sigma);
    move |r: T| {
        let u = r * r - T::one();
        r.powi(n as i32 - 1) * (-u * u * inv_two_s2).exp()
    }
}

/// `Z_sigma * exp(-1/(2 sigma^2))`, the normalization with the peak factor
/// removed. Errors are relative: `abs_error_estimate + tail_bound <= tol * value`.
pub fn scaled_normalization<T: Real>(n: usize, sigma: T, tol: T) -> Result<QuadratureResult<T>> {
    if n == 0 {
        return Err(invalid("n", "need n >= 1"));
    }
    check_sigma_tol(sigma, tol)?;
    let radius = truncation_radius(n, sigma, tol)?;
    let area = sphere_area::<T>(n);
    let w = radial_weight(n, sigma);
    let (raw, err) = integrate_adaptive(&w, T::zero(), radius, T::zero(), tol / T::lit(2.0))?;
    let tail = tail_bound(n, n - 1, sigma, radius);
    let result = QuadratureResult {
        value: area * raw,
        abs_error_estimate: area * err,
        tail_bound: tail,
        truncation_radius: radius,
        accuracy: Accuracy::Exact,
    };
    if result.total_error() > tol * result.value {
        return Err(Error::QuadratureNotConverged {
            tol: (tol * result.value).to_f64_lossy(),
            achieved: result.total_error().to_f64_lossy(),
            intervals: 0,
        });
    }
    Ok(result)
}

/// `Z_sigma = int_{R^n} exp((2/sigma^2)(|x|^2/2 - |x|^4/4)) dx`.
///
/// `tol` is relative. Fails with [`Error::Overflow`] when `Z_sigma` itself is
/// not representable (roughly `sigma < 0.027` in `f64`); the cancelled form in
/// [`scaled_normalization`] still works there.
pub fn normalization_z<T: Real>(n: usize, sigma: T, tol: T) -> Result<QuadratureResult<T>> {
    let scaled = scaled_normalization(n, sigma, tol)?;
    let peak = (T::one() / (T::lit(2.0) * sigma * sigma)).exp();
    if !peak.is_finite() || !(scaled.value * peak).is_finite() {
        return Err(Error::Overflow { what: "Z_sigma" });
    }
    Ok(QuadratureResult {
        value: scaled.value * peak,
        abs_error_estimate: scaled.abs_error_estimate * peak,
        tail_bound: scaled.tail_bound * peak,
        ..scaled
    })
}

/// `(1/Z) int_{R^n} (1 - |x|^2) rho(x) dx`: the top Lyapunov exponent for
/// `n = 1` and an upper bound on it for `n >= 2`. `tol` is absolute.
pub fn lambda_top_quad<T: Real>(n: usize, sigma: T, tol: T) -> Result<QuadratureResult<T>> {
    if n == 0 {
        return Err(invalid("n", "need n >= 1"));
    }
    check_sigma_tol(sigma, tol)?;
    let radius = truncation_radius(n, sigma, tol)?;
    let half = T::lit(0.5);
    // |lambda| <= max_{r <= R} |1 - r^2| < R^2
    let z_tol = half * tol / (T::one() + radius * radius);
    let z = scaled_normalization(n, sigma, z_tol)?;
    let area = sphere_area::<T>(n);
    let w = radial_weight(n, sigma);
    let numerator = |r: T| (T::one() - r * r) * w(r);
    let (raw, err) = integrate_adaptive(numerator, T::zero(), radius, half * tol * z.value / area, T::zero())?;
    let lambda = raw * area / z.value;
    // tail of the numerator uses |1 - r^2| <= r^2
    let tail_num = tail_bound(n, n + 1, sigma, radius);
    let result = QuadratureResult {
        value: lambda,
        abs_error_estimate: (area * err + lambda.abs() * z.abs_error_estimate) / z.value,
        tail_bound: (tail_num + lambda.abs() * z.tail_bound) / z.value,
        truncation_radius: radius,
        accuracy: if n == 1 { Accuracy::Exact } else { Accuracy::UpperBound },
    };
    if result.total_error() > tol {
        return Err(Error::QuadratureNotConverged {
            tol: tol.to_f64_lossy(),
            achieved: result.total_error().to_f64_lossy(),
            intervals: 0,
        });
    }
    Ok(result)
}

/// `int_0^inf (1 - x^2) exp(-(x^4 - 2x^2) / (2 sigma^2)) dx`, the unnormalized
/// n = 1 integral. It is strictly decreasing in `sigma` and has the sign of
/// `lambda_top(1, sigma)`. `tol` is relative to the peak factor
/// `exp(1/(2 sigma^2))`.
pub fn lambda_numerator_n1<T: Real>(sigma: T, tol: T) -> Result<QuadratureResult<T>> {
    check_sigma_tol(sigma, tol)?;
    let radius = truncation_radius(1, sigma, tol)?;
    let w = radial_weight(1, sigma);
    let (raw, err) = integrate_adaptive(|r: T| (T::one() - r * r) * w(r), T::zero(), radius, tol, T::zero())?;
    let peak = (T::one() / (T::lit(2.0) * sigma * sigma)).exp();
    if !peak.is_finite() {
        return Err(Error::Overflow { what: "peak factor exp(1/(2 sigma^2))" });
    }
    // sphere_area(1) = 2 counts both half-lines; this integral is one of them
    let tail = tail_bound(1, 2, sigma, radius) / T::lit(2.0);
    Ok(QuadratureResult {
        value: raw * peak,
        abs_error_estimate: err * peak,
        tail_bound: tail * peak,
        truncation_radius: radius,
        accuracy: Accuracy::Exact,
    })
}

/// `-pi sigma^2 / Z_sigma` for `n = 2`.
///
/// In polar coordinates `(1 - r^2) r e^{g(r)} = (sigma^2 / 2) d/dr e^{g(r)}`
/// with `g(r) = (2/sigma^2)(r^2/2 - r^4/4)`, so the numerator integrates to
/// `2 pi (sigma^2 / 2)(0 - 1)`. Computed in the cancelled form
/// `-pi sigma^2 exp(-1/(2 sigma^2)) / Z_scaled`.
pub fn closed_form_bound_n2<T: Real>(sigma: T, tol: T) -> Result<T> {
    let z = scaled_normalization(2, sigma, tol)?;
    let decay = (-T::one() / (T::lit(2.0) * sigma * sigma)).exp();
    Ok(-T::PI() * sigma * sigma * decay / z.value)
}

/// Endpoints of a sign-change bracket found by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket<T> {
    pub lower: T,
    pub upper: T,
    pub f_lower: T,
    pub f_upper: T,
    pub iterations: usize,
}

/// Bisection on `[lower, upper]` until the bracket is at most `width` wide.
/// The midpoint is always `(lower + upper) / 2`, so runs with smaller `width`
/// produce nested brackets.
pub fn bisect<T: Real, F: FnMut(T) -> Result<T>>(
    mut f: F,
    lower: T,
    upper: T,
    width: T,
    max_iter: usize,
) -> Result<Bracket<T>> {
    if !(lower < upper) {
        return Err(invalid("bracket", format!("need lower < upper, got [{lower}, {upper}]")));
    }
    let mut lo = lower;
    let mut hi = upper;
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if f_lo == T::zero() || f_hi == T::zero() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange {
            lower: lo.to_f64_lossy(),
            upper: hi.to_f64_lossy(),
            f_lower: f_lo.to_f64_lossy(),
            f_upper: f_hi.to_f64_lossy(),
        });
    }
    let mut iterations = 0;
    while hi - lo > width && iterations < max_iter {
        let mid = (lo + hi) / T::lit(2.0);
        if !(mid > lo && mid < hi) {
            break;
        }
        let f_mid = f(mid)?;
        iterations += 1;
        if f_mid == T::zero() {
            // exact root: shrink to a machine-width bracket around it
            let step = mid.abs().max(T::one()) * T::epsilon();
            return Ok(Bracket { lower: mid - step, upper: mid + step, f_lower: f(mid - step)?, f_upper: f(mid + step)?, iterations });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(Bracket { lower: lo, upper: hi, f_lower: f_lo, f_upper: f_hi, iterations })
}

/// Quadrature tolerance for each lambda evaluation inside [`sigma_star`];
/// fixed so that brackets for different `tol` are nested.
const SIGMA_STAR_QUAD_TOL: f64 = 1e-12;

/// Bisection of `sigma -> lambda_top_quad(1, sigma)` on `[1/2, 2]`.
pub fn sigma_star<T: Real>(tol: T) -> Result<SigmaStarResult<T>> {
    if !(tol > T::zero()) {
        return Err(invalid("tol", "need tol > 0"));
    }
    let quad_tol = T::lit(SIGMA_STAR_QUAD_TOL).max(T::epsilon() * T::lit(1e4));
    let bracket = bisect(
        |s| lambda_top_quad(1, s, quad_tol).map(|r| r.value),
        T::lit(0.5),
        T::lit(2.0),
        T::lit(2.0) * tol,
        200,
    )?;
    Ok(SigmaStarResult {
        lower: bracket.lower,
        upper: bracket.upper,
        lambda_at_lower: bracket.f_lower,
        lambda_at_upper: bracket.f_upper,
        iterations: bracket.iterations,
    })
}

/// CDF of the invariant law of the n = 1 system on the real line.
#[derive(Debug, Clone, Copy)]
pub struct InvariantCdf<T> {
    sigma: T,
    half_mass: T,
    tol: T,
}

impl<T: Real> InvariantCdf<T> {
    pub fn new(sigma: T, tol: T) -> Result<Self> {
        let z = scaled_normalization(1, sigma, tol)?;
        Ok(Self { sigma, half_mass: z.value / T::lit(2.0), tol })
    }

    pub fn eval(&self, x: T) -> Result<T> {
        Ok(self.eval_many(&[x])?[0])
    }

    /// Evaluates the CDF at every point, integrating between consecutive
    /// radii so the total work is one pass over `[0, max |x|]`.
    pub fn eval_many(&self, xs: &[T]) -> Result<Vec<T>> {
        let w = radial_weight(1, self.sigma);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].abs().partial_cmp(&xs[b].abs()).expect("finite samples"));
        let mut out = vec![T::zero(); xs.len()];
        let mut acc = T::zero();
        let mut prev = T::zero();
        let abs_tol = self.tol * self.half_mass;
        for &i in &order {
            let r = xs[i].abs();
            if r > prev {
                acc = acc + integrate_adaptive(&w, prev, r, abs_tol, T::zero())?.0;
                prev = r;
            }
            let half = T::lit(0.5);
            let mass = (acc / (T::lit(2.0) * self.half_mass)).min(half);
            out[i] = if xs[i] >= T::zero() { half + mass } else { half - mass };
        }
        Ok(out)
    }
}
