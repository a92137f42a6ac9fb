//! Small numerical helpers shared across modules.

use crate::scalar::{from_usize, lit, Real};

/// Pairwise (cascade) summation; error grows like `log n` rather than `n`.
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        return v.iter().fold(T::zero(), |a, &b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// `log sum exp(v)`; returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let mx = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !mx.is_finite() {
        return mx;
    }
    let shifted: Vec<T> = v.iter().map(|&a| (a - mx).exp()).collect();
    mx + pairwise_sum(&shifted).ln()
}

/// Kish effective sample size `(sum w)^2 / sum w^2` of weights `w = exp(log_w)`.
pub fn effective_sample_size<T: Real>(log_w: &[T]) -> T {
    let mx = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    if !mx.is_finite() {
        return T::zero();
    }
    let w: Vec<T> = log_w.iter().map(|&a| (a - mx).exp()).collect();
    let sq: Vec<T> = w.iter().map(|&a| a * a).collect();
    let s = pairwise_sum(&w);
    s * s / pairwise_sum(&sq)
}

/// Sample mean and unbiased variance.
pub fn mean_var<T: Real>(v: &[T]) -> (T, T) {
    let n = v.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let mean = pairwise_sum(v) / from_usize(n);
    if n == 1 {
        return (mean, T::zero());
    }
    let sq: Vec<T> = v.iter().map(|&a| (a - mean) * (a - mean)).collect();
    (mean, pairwise_sum(&sq) / from_usize(n - 1))
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares line `y = a + b x` with per-point standard deviations `s`
/// propagated into the intercept. Returns `(a, b, se_a)`.
pub fn affine_fit(x: &[f64], y: &[f64], s: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // intercept = sum_k g_k y_k with g_k = 1/n - mx (x_k - mx) / sxx
    let var: f64 = x
        .iter()
        .zip(s)
        .map(|(&a, &sk)| {
            let g = 1.0 / n - mx * (a - mx) / sxx;
            g * g * sk * sk
        })
        .sum();
    (intercept, slope, var.sqrt())
}

/// Nodes and weights of the `k`-point Gauss–Legendre rule on `[0, 1]`, `k <= 5`.
pub fn gauss_legendre_unit<T: Real>(k: usize) -> (Vec<T>, Vec<T>) {
    let (x, w): (&[f64], &[f64]) = match k {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.5773502691896257, 0.5773502691896257], &[1.0, 1.0]),
        3 => (
            &[-0.7745966692414834, 0.0, 0.7745966692414834],
            &[0.5555555555555556, 0.8888888888888888, 0.5555555555555556],
        ),
        4 => (
            &[
                -0.8611363115940526,
                -0.3399810435848563,
                0.3399810435848563,
                0.8611363115940526,
            ],
            &[
                0.3478548451374538,
                0.6521451548625461,
                0.6521451548625461,
                0.3478548451374538,
            ],
        ),
        _ => (
            &[
                -0.906179845938664,
                -0.5384693101056831,
                0.0,
                0.5384693101056831,
                0.906179845938664,
            ],
            &[
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
    };
    (
        x.iter().map(|&a| lit(0.5 * (a + 1.0))).collect(),
        w.iter().map(|&a| lit(0.5 * a)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn effective_sample_size_limits() {
        assert!((effective_sample_size(&[0.3f64; 50]) - 50.0).abs() < 1e-12);
        let v = [0.0f64, -800.0, -900.0];
        assert!((effective_sample_size(&v) - 1.0).abs() < 1e-12);
        // weights 1, 1, 2: 16 / 6
        let v = [0.0f64, 0.0, 2f64.ln()];
        assert!((effective_sample_size(&v) - 16.0 / 6.0).abs() < 1e-12);
        assert_eq!(effective_sample_size::<f64>(&[]), 0.0);
    }

    #[test]
    fn lse_is_stable() {
        let v = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(5, 100, 1.96);
        assert!(lo < 0.05 && 0.05 < hi);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn affine_fit_recovers_line() {
        let x = [0.4, 0.2, 0.1];
        let y: Vec<f64> = x.iter().map(|a| -0.7 + 0.3 * a).collect();
        let (a, b, se) = affine_fit(&x, &y, &[0.01, 0.01, 0.01]);
        assert!((a + 0.7).abs() < 1e-12 && (b - 0.3).abs() < 1e-12);
        assert!(se > 0.01);
    }

    #[test]
    fn gauss_legendre_integrates_quintics() {
        for k in 1..=5 {
            let (x, w) = gauss_legendre_unit::<f64>(k);
            let deg = 2 * k - 1;
            let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(deg as i32)).sum();
            assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn pairwise_matches_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..500)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-9 * (1.0 + naive.abs()) + 1e-9);
        }

        #[test]
        fn lse_bounds(v in proptest::collection::vec(-50f64..50.0, 1..50)) {
            let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let l = log_sum_exp(&v);
            prop_assert!(l >= mx - 1e-12 && l <= mx + (v.len() as f64).ln() + 1e-12);
        }
    }
}
