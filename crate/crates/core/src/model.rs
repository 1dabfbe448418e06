//! Drift `b(x) = (1 - |x|^2) x`, its Jacobian action, the one-sided Lipschitz
//! gap and the unnormalized log-density of the invariant measure on `M`.
//!
//! The state space is `R^d`; noise acts on the first `n` coordinates only. The
//! subspace `M = { x : x_i = 0 for i >= n }` (zero-based) is invariant.

use std::ops::Index;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// The triple `(d, n, sigma)` defining the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    pub d: usize,
    pub n: usize,
    pub sigma: T,
}

impl<T: Real> SystemParams<T> {
    pub fn new(d: usize, n: usize, sigma: T) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "state dimension must be at least 1"));
        }
        if n == 0 || n > d {
            return Err(invalid("n", format!("need 1 <= n <= d = {d}, got {n}")));
        }
        if !sigma.is_finite() || sigma < T::zero() {
            return Err(invalid("sigma", format!("need finite sigma >= 0, got {sigma}")));
        }
        Ok(Self { d, n, sigma })
    }

    /// `n == d`: every coordinate is forced.
    pub fn is_non_degenerate(&self) -> bool {
        self.n == self.d
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma == T::zero()
    }

    pub fn with_sigma(&self, sigma: T) -> Result<Self> {
        Self::new(self.d, self.n, sigma)
    }
}

/// A point of `R^d` with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec<T>(Vec<T>);

impl<T: Real> StateVec<T> {
    pub fn new(components: Vec<T>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("state", "empty vector"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { what: "state vector" });
        }
        Ok(Self(components))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![T::zero(); d])
    }

    /// Unit vector along coordinate `i` (zero-based).
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![T::zero(); d];
        v[i] = T::one();
        Self(v)
    }

    /// `e_d`, the last basis vector.
    pub fn last_basis(d: usize) -> Self {
        Self::basis(d, d - 1)
    }

    pub(crate) fn from_vec_unchecked(v: Vec<T>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn norm_sq(&self) -> T {
        norm_sq(&self.0)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn distance(&self, other: &Self) -> T {
        distance(&self.0, &other.0)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self(self.0.iter().map(|&c| c * s).collect())
    }

    /// Whether the point lies in `M`, i.e. components `n..d` vanish exactly.
    pub fn in_subspace(&self, n: usize) -> bool {
        self.0[n.min(self.0.len())..].iter().all(|c| *c == T::zero())
    }
}

impl<T> Index<usize> for StateVec<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// Writes `b(x)` into `out` and returns `|x|^2`.
#[inline]
pub(crate) fn drift_into<T: Real>(x: &[T], out: &mut [T]) -> T {
    let r2 = norm_sq(x);
    let factor = T::one() - r2;
    for (o, &c) in out.iter_mut().zip(x) {
        *o = factor * c;
    }
    r2
}

/// `b(x) = (1 - |x|^2) x`.
pub fn drift<T: Real>(x: &StateVec<T>) -> StateVec<T> {
    let mut out = vec![T::zero(); x.dim()];
    drift_into(x.as_slice(), &mut out);
    StateVec(out)
}

/// `Db(x) u = (1 - |x|^2) u - 2 <x, u> x`, written into `out`.
#[inline]
pub(crate) fn jacobian_apply_into<T: Real>(x: &[T], u: &[T], out: &mut [T]) {
    let factor = T::one() - norm_sq(x);
    let two_xu = T::lit(2.0) * dot(x, u);
    for ((o, &ui), &xi) in out.iter_mut().zip(u).zip(x) {
        *o = factor * ui - two_xu * xi;
    }
}

pub fn drift_jacobian_apply<T: Real>(x: &StateVec<T>, u: &StateVec<T>) -> StateVec<T> {
    let mut out = vec![T::zero(); x.dim()];
    jacobian_apply_into(x.as_slice(), u.as_slice(), &mut out);
    StateVec(out)
}

/// `<x - y, b(x) - b(y)> - |x - y|^2 (1 - 3/4 |x|^2)`, which is never positive.
pub fn one_sided_gap<T: Real>(x: &StateVec<T>, y: &StateVec<T>) -> T {
    let bx = drift(x);
    let by = drift(y);
    let mut inner = T::zero();
    let mut diff_sq = T::zero();
    for i in 0..x.dim() {
        let dx = x[i] - y[i];
        inner = inner + dx * (bx[i] - by[i]);
        diff_sq = diff_sq + dx * dx;
    }
    inner - diff_sq * (T::one() - T::lit(0.75) * x.norm_sq())
}

/// Log of the unnormalized invariant density at a point with `|x|^2 = r2`:
/// `(2 / sigma^2) (r2 / 2 - r2^2 / 4)`.
pub fn invariant_log_density<T: Real>(r2: T, sigma: T) -> Result<T> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(invalid("sigma", "invariant density needs sigma > 0"));
    }
    if !(r2 >= T::zero()) {
        return Err(invalid("r2", "squared radius must be non-negative"));
    }
    let two = T::lit(2.0);
    Ok(two / (sigma * sigma) * (r2 / two - r2 * r2 / T::lit(4.0)))
}
