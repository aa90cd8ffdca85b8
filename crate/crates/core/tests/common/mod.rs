#![allow(dead_code)]

use nmwalk::qops::{c, ComplexMatrix, C64};

/// Weighted non-increasing least squares by exhaustive search over all
/// partitions of `0..n` into contiguous blocks.
pub fn isotonic_exhaustive(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut fitted = Vec::with_capacity(n);
        let mut start = 0;
        let mut feasible = true;
        let mut prev = f64::INFINITY;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let sw: f64 = w[start..end].iter().sum();
                let m = (start..end).map(|i| y[i] * w[i]).sum::<f64>() / sw;
                if m > prev + 1e-15 {
                    feasible = false;
                    break;
                }
                prev = m;
                fitted.extend(std::iter::repeat(m).take(end - start));
                start = end;
            }
        }
        if feasible {
            let sse: f64 = (0..n).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
            if sse < best.0 {
                best = (sse, fitted);
            }
        }
    }
    best.1
}

/// One-sided periodogram by direct O(N²) summation, same scaling as the
/// library: mean removed, interior bins doubled, DC and Nyquist not.
pub fn naive_periodogram(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    (0..=n / 2)
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
                acc += c(phase.cos(), phase.sin()) * (v - mean);
            }
            let p = acc.norm_sqr() / n as f64;
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

pub fn max_deviation(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
