//! Small numeric helpers shared across the crate: a numerically stable
//! logistic function, the standard normal distribution, and a deterministic
//! pairwise accumulator used everywhere record contributions are summed.
//!
//! Transcendentals go through `libm` so results are identical with and
//! without the standard library.

use alloc::vec;
use alloc::vec::Vec;

/// sqrt(2*pi)
const SQRT_TWO_PI: f64 = 2.5066282746310002;

/// Logistic (inverse-logit) function, stable for large |x|.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / SQRT_TWO_PI
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (|relative error| < 1.2e-9) followed by a
/// single Halley refinement against `normal_cdf`, which brings the result to
/// machine precision. Requires 0 < p < 1.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile needs p in (0, 1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley step: e is the CDF error, u the Newton correction.
    let e = normal_cdf(x) - p;
    let u = e * SQRT_TWO_PI * libm::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    x
}

/// Deterministic blockwise-pairwise accumulation of per-item `d`-vectors.
///
/// `fill(i, scratch)` writes item i's contribution into `scratch`; the items
/// are summed in blocks of 64 and block sums reduced pairwise. The result is
/// a fixed function of the inputs (no dependence on chunking by any outer
/// loop) and rounding error grows like O(log n) instead of O(n).
pub fn pairwise_block_sum<F>(n: usize, d: usize, mut fill: F) -> Vec<f64>
where
    F: FnMut(usize, &mut [f64]),
{
    const BLOCK: usize = 64;

    fn sum_range<F>(lo: usize, hi: usize, d: usize, fill: &mut F, scratch: &mut [f64]) -> Vec<f64>
    where
        F: FnMut(usize, &mut [f64]),
    {
        if hi - lo <= BLOCK {
            let mut acc = vec![0.0; d];
            for i in lo..hi {
                fill(i, scratch);
                for (a, s) in acc.iter_mut().zip(scratch.iter()) {
                    *a += *s;
                }
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            let mut left = sum_range(lo, mid, d, fill, scratch);
            let right = sum_range(mid, hi, d, fill, scratch);
            for (l, r) in left.iter_mut().zip(right.iter()) {
                *l += *r;
            }
            left
        }
    }

    if n == 0 {
        return vec![0.0; d];
    }
    let mut scratch = vec![0.0; d];
    sum_range(0, n, d, &mut fill, &mut scratch)
}

/// Maximum absolute entry of a slice (0 for an empty slice).
pub fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_matches_hand_values() {
        assert_eq!(expit(0.0), 0.5);
        // 1 / (1 + e^{-0.5})
        assert!((expit(0.5) - 0.6224593312018546).abs() < 1e-15);
        assert!((expit(-0.5) - (1.0 - 0.6224593312018546)).abs() < 1e-15);
        // No overflow and correct saturation far out in the tails.
        assert_eq!(expit(800.0), 1.0);
        assert_eq!(expit(-800.0), 0.0);
    }

    #[test]
    fn expit_is_symmetric() {
        for i in -40..=40 {
            let x = i as f64 * 0.25;
            assert!((expit(x) + expit(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // Phi(1.96) from standard tables.
        assert!((normal_cdf(1.96) - 0.9750021048517795).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        // z_{0.975}, the 95% two-sided critical value.
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-10);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        for &p in &[1e-6, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0 - 1e-6] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_integers() {
        // Integer-valued doubles add exactly, so any summation order agrees.
        let n = 1000;
        let out = pairwise_block_sum(n, 2, |i, s| {
            s[0] = i as f64;
            s[1] = 1.0;
        });
        assert_eq!(out[0], (n * (n - 1) / 2) as f64);
        assert_eq!(out[1], n as f64);
    }

    #[test]
    fn pairwise_sum_empty_is_zero() {
        assert_eq!(pairwise_block_sum(0, 3, |_, _| unreachable!()), vec![0.0; 3]);
    }
}
