//! Reference computations written independently of the library.
#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc;

pub fn lognormal_cdf(t: f64, median: f64, dispersion: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    0.5 * erfc(-(t / median).ln() / (dispersion * SQRT_2))
}

pub fn weibull_cdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    1.0 - (-(t / scale).powf(shape)).exp()
}

/// `Σ_A F(A) Π_{k∈A} φ_k Π_{k∉A} (1 − φ_k)` over all subsets, with subsets
/// indexed by their bitmask.
pub fn subset_expectation(phi: &[f64], f_by_mask: impl Fn(u32) -> f64) -> f64 {
    let n = phi.len();
    (0u32..1 << n)
        .map(|mask| {
            let p: f64 = (0..n)
                .map(|k| if mask >> k & 1 == 1 { phi[k] } else { 1.0 - phi[k] })
                .product();
            p * f_by_mask(mask)
        })
        .sum()
}

/// Equal-impact functionality: fraction of recovered systems.
pub fn fraction_up(n: usize) -> impl Fn(u32) -> f64 {
    move |mask| mask.count_ones() as f64 / n as f64
}

/// Kolmogorov-Smirnov distance between a sample and a CDF, comparing
/// `F(x)` with the share of points `<= x` and the left limit `F(x-)` with
/// the share `< x` at every distinct sample value, so atoms are handled.
pub fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sample.len() {
        let x = sample[i];
        let j = sample[i..].partition_point(|&v| v == x) + i;
        let below = cdf(x - 1e-12 * x.abs().max(1.0));
        worst = worst
            .max((cdf(x) - j as f64 / n).abs())
            .max((below - i as f64 / n).abs());
        i = j;
    }
    worst
}

/// Composite Simpson rule on `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}
