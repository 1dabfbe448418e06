//! Small order-deterministic statistics helpers.

use crate::scalar::Real;

/// Sample mean and standard error of the mean, summed in slice order.
pub fn mean_and_stderr<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::infinity());
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let var = ss / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Median of a non-empty sample (mean of the two central values for even
/// lengths).
pub fn median<T: Real>(xs: &[T]) -> T {
    assert!(!xs.is_empty(), "median of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of NaN"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / T::lit(2.0)
    }
}

/// Kolmogorov-Smirnov distance `sup |F_n - F|` given the reference CDF
/// evaluated at each sample (in any order).
pub fn ks_distance_from_cdf_values<T: Real>(cdf_values: &[T]) -> T {
    let mut v = cdf_values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("CDF value is NaN"));
    let n = T::from_usize_lossy(v.len());
    v.iter().enumerate().fold(T::zero(), |sup, (i, &f)| {
        let lo = T::from_usize_lossy(i) / n;
        let hi = T::from_usize_lossy(i + 1) / n;
        sup.max((f - lo).abs()).max((hi - f).abs())
    })
}

/// Kolmogorov-Smirnov distance of a sample against a CDF.
pub fn ks_distance<T: Real, F: Fn(T) -> T>(samples: &[T], cdf: F) -> T {
    let values: Vec<T> = samples.iter().map(|&x| cdf(x)).collect();
    ks_distance_from_cdf_values(&values)
}
