//! Quadrature results against brute-force oracles that share no code with the
//! library: composite Simpson on a uniform radial grid, and a 2-D tensor grid.

use ddw_core::quadrature::{
    closed_form_bound_n2, lambda_numerator_n1, lambda_top_quad, normalization_z, scaled_normalization, sigma_star,
    truncation_radius,
};
use std::f64::consts::PI;

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!(),
    }
}

/// `(Z e^{-1/(2 s^2)}, lambda)` by Simpson with 10^6 panels on `[0, radius]`.
fn simpson_oracle(n: usize, sigma: f64, radius: f64) -> (f64, f64) {
    let w = |r: f64| r.powi(n as i32 - 1) * (-(r * r - 1.0).powi(2) / (2.0 * sigma * sigma)).exp();
    let z = area(n) * simpson(w, 0.0, radius, 1_000_000);
    let num = area(n) * simpson(|r| (1.0 - r * r) * w(r), 0.0, radius, 1_000_000);
    (z, num / z)
}

#[test]
fn radial_quadrature_matches_simpson_oracle() {
    let tol = 1e-10;
    for n in 1..=3 {
        for sigma in [0.5, 1.0, 2.0] {
            let z = scaled_normalization(n, sigma, tol).unwrap();
            let lam = lambda_top_quad(n, sigma, tol).unwrap();
            let (z_ref, lam_ref) = simpson_oracle(n, sigma, lam.truncation_radius);
            let z_err = (z.value - z_ref).abs();
            assert!(z_err <= z.total_error() + 1e-12 * z_ref, "Z n={n} sigma={sigma}: {} vs {z_ref}", z.value);
            let lam_err = (lam.value - lam_ref).abs();
            assert!(lam_err <= lam.total_error() + 1e-12, "lambda n={n} sigma={sigma}: {} vs {lam_ref}", lam.value);
        }
    }
}

#[test]
fn normalization_laplace_limit() {
    let sigma = 0.1f64;
    let z = scaled_normalization(1, sigma, 1e-10).unwrap();
    let ratio = z.value / (sigma * (2.0 * PI).sqrt());
    assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
    let radius = truncation_radius(1, sigma, 1e-10).unwrap();
    let (z_ref, _) = simpson_oracle(1, sigma, radius);
    assert!((z.value - z_ref).abs() < 1e-10 * z_ref);
}

#[test]
fn n2_normalization_matches_tensor_grid() {
    let sigma = 1.0f64;
    let z = normalization_z(2, sigma, 1e-12).unwrap();
    // trapezoid on a tensor grid; the integrand is smooth and negligible at the edges
    let m = 2400;
    let h = 12.0 / m as f64;
    let mut acc = 0.0;
    for i in 0..=m {
        let x = -6.0 + i as f64 * h;
        let wx = if i == 0 || i == m { 0.5 } else { 1.0 };
        for j in 0..=m {
            let y = -6.0 + j as f64 * h;
            let wy = if j == 0 || j == m { 0.5 } else { 1.0 };
            let r2 = x * x + y * y;
            acc += wx * wy * ((2.0 / (sigma * sigma)) * (0.5 * r2 - 0.25 * r2 * r2)).exp();
        }
    }
    let z_ref = acc * h * h;
    assert!(((z.value - z_ref) / z_ref).abs() < 1e-8, "{} vs {z_ref}", z.value);
}

#[test]
fn closed_form_n2_agrees_with_radial_quadrature() {
    for sigma in [0.5, 1.0, 2.0] {
        let closed = closed_form_bound_n2(sigma, 1e-13f64).unwrap();
        let quad = lambda_top_quad(2, sigma, 1e-13).unwrap().value;
        assert!(closed < 0.0);
        assert!(((closed - quad) / quad).abs() < 1e-10, "sigma={sigma}: {closed} vs {quad}");
    }
}

#[test]
fn reference_values() {
    // independent high-precision evaluations of the same integrals
    let cases = [
        (1, 0.5f64, 0.147_86f64),
        (1, 1.0, 0.106_54),
        (1, 2.0, -0.290_46),
        (2, 1.0, -0.287_6),
        (3, 2.0, -1.549_8),
    ];
    for (n, sigma, expected) in cases {
        let v = lambda_top_quad(n, sigma, 1e-10).unwrap().value;
        assert!((v - expected).abs() < 1e-3, "n={n} sigma={sigma}: {v}");
    }
}

#[test]
fn unnormalized_n1_integral_decreases_on_fine_grid() {
    let values: Vec<f64> = (0..100)
        .map(|i| {
            let sigma = 0.3 + 2.7 * i as f64 / 99.0;
            lambda_numerator_n1(sigma, 1e-12).unwrap().value
        })
        .collect();
    for (i, w) in values.windows(2).enumerate() {
        assert!(w[1] < w[0], "not decreasing at grid index {i}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn normalized_n1_exponent_decreases_past_its_peak() {
    let on = |sigma: f64| lambda_top_quad(1, sigma, 1e-12).unwrap().value;
    let coarse: Vec<f64> = (0..7).map(|i| on(0.6 + 0.2 * i as f64)).collect();
    for w in coarse.windows(2) {
        assert!(w[1] < w[0]);
    }
    let fine: Vec<f64> = (0..100).map(|i| on(0.7 + 2.3 * i as f64 / 99.0)).collect();
    for w in fine.windows(2) {
        assert!(w[1] < w[0]);
    }
    // below the peak the normalized exponent rises with sigma
    assert!(on(0.3) < on(0.5));
}

#[test]
fn higher_noise_dimensions_always_contract() {
    for n in 2..=4 {
        for sigma in [0.3f64, 0.5, 1.0, 2.0, 4.0] {
            let r = lambda_top_quad(n, sigma, 1e-10).unwrap();
            assert!(r.value < 0.0 && r.value.abs() > 10.0 * r.total_error(), "n={n} sigma={sigma}: {}", r.value);
        }
    }
}

#[test]
fn sigma_star_bracket() {
    let coarse = sigma_star(1e-6f64).unwrap();
    assert!(coarse.lower > 0.5 && coarse.upper < 2.0);
    assert!(coarse.width() <= 2e-6);
    assert!(coarse.lambda_at_lower > 0.0 && coarse.lambda_at_upper < 0.0);
    assert!((coarse.midpoint() - 1.307_273_5).abs() < 2e-6);
    let fine = sigma_star(1e-8f64).unwrap();
    assert!(fine.lower >= coarse.lower && fine.upper <= coarse.upper);
}

#[test]
fn halving_tolerance_stays_within_reported_error() {
    for (n, sigma) in [(1, 0.4), (2, 0.7), (3, 1.5)] {
        let mut tol = 1e-4f64;
        let mut prev = lambda_top_quad(n, sigma, tol).unwrap();
        for _ in 0..8 {
            tol /= 2.0;
            let next = lambda_top_quad(n, sigma, tol).unwrap();
            assert!((next.value - prev.value).abs() <= prev.total_error());
            prev = next;
        }
    }
}
