use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mc::McEstimate;
use crate::model::VolatilityModel;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::stats::{log_sum_exp, mean_var};

/// How the growth rate of `E exp(int_0^t V(Y_s) ds)` is turned into an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FkEstimator {
    /// `(1/t) log m(t)`; biased by the `O(1/t)` prefactor of the moment.
    #[default]
    Plain,
    /// `[log m(t) - log m(t/2)] / (t/2)` from the same paths, which cancels the
    /// prefactor to leading order.
    HorizonDifference,
}

/// Settings for [`feynman_kac_oracle`].
#[derive(Debug, Clone)]
pub struct FkConfig<T> {
    pub t_horizon: T,
    pub n_paths: usize,
    pub dt: T,
    pub seed: u64,
    pub y0: Vec<T>,
    pub estimator: FkEstimator,
}

impl<T: Real> FkConfig<T> {
    pub fn new(t_horizon: T, n_paths: usize, dt: T, seed: u64, m: usize) -> Self {
        Self {
            t_horizon,
            n_paths,
            dt,
            seed,
            y0: vec![T::zero(); m],
            estimator: FkEstimator::default(),
        }
    }
}

/// Monte Carlo estimate of `lim (1/t) log E exp(int_0^t |sigma^T(x, Y_s) p|^2 ds)`
/// with `dY = (b + 2 tau sigma^T p) dt + sqrt(2) tau dW`, simulated by
/// Euler–Maruyama with `Y` wrapped onto the torus.
///
/// Path `k` draws from a ChaCha8 stream `k` seeded by `cfg.seed`, so results do
/// not depend on the number of worker threads.
pub fn feynman_kac_oracle<T: Real>(
    model: &VolatilityModel<T>,
    x: &[T],
    p: &[T],
    cfg: &FkConfig<T>,
) -> Result<McEstimate<T>> {
    let t = cfg.t_horizon;
    if !(t >= lit(10.0)) {
        return Err(Error::precondition(
            "Feynman-Kac horizon must be at least 10",
        ));
    }
    if !(cfg.dt > T::zero() && cfg.dt <= lit::<T>(1e-3) * t) {
        return Err(Error::precondition(
            "Feynman-Kac step must satisfy 0 < dt <= 1e-3 t",
        ));
    }
    if cfg.n_paths < 2 {
        return Err(Error::precondition("need at least two paths"));
    }
    if cfg.y0.len() != model.m() || x.len() != model.n() || p.len() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "feynman_kac_oracle",
            detail: "x, p must match n and y0 must match m".into(),
        });
    }
    let steps = (t / cfg.dt).ceil().to_usize().unwrap_or(1).max(2);
    let steps = steps + steps % 2;
    let dt = t / from_usize(steps);
    let half = steps / 2;
    let (m, r) = (model.m(), model.r());
    let sq_dt = dt.sqrt();
    let sqrt2 = lit::<T>(2.0).sqrt();
    let two = lit::<T>(2.0);

    let results: Vec<Result<(T, T)>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut s = model.scratch();
            let mut y = cfg.y0.clone();
            let mut ts = vec![T::zero(); m];
            let mut b = vec![T::zero(); m];
            let mut dw = vec![T::zero(); r];
            let mut acc = T::zero();
            let mut acc_half = T::zero();
            for step in 0..steps {
                let v = model.tau_sigma_t_p(x, &y, p, &mut s, &mut ts);
                model.b(&y, &mut b);
                acc += v * dt;
                for d in dw.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *d = lit::<T>(z) * sq_dt;
                }
                for i in 0..m {
                    let mut noise = T::zero();
                    for j in 0..r {
                        noise += s.tau[i * r + j] * dw[j];
                    }
                    let yi = y[i] + (b[i] + two * ts[i]) * dt + sqrt2 * noise;
                    y[i] = yi - yi.floor();
                }
                if step + 1 == half {
                    acc_half = acc;
                }
            }
            if !acc.is_finite() {
                return Err(Error::CoefficientError(
                    "non-finite potential along a path".into(),
                ));
            }
            Ok((acc, acc_half))
        })
        .collect();
    let mut full = Vec::with_capacity(cfg.n_paths);
    let mut halfv = Vec::with_capacity(cfg.n_paths);
    for res in results {
        let (a, b) = res?;
        full.push(a);
        halfv.push(b);
    }
    let nf: T = from_usize(cfg.n_paths);
    let log_m1 = log_sum_exp(&full) - nf.ln();
    let log_m2 = log_sum_exp(&halfv) - nf.ln();
    let mx1 = full.iter().copied().fold(T::neg_infinity(), T::max);
    let mx2 = halfv.iter().copied().fold(T::neg_infinity(), T::max);
    let z1: Vec<T> = full.iter().map(|&a| (a - mx1).exp()).collect();
    let z2: Vec<T> = halfv.iter().map(|&a| (a - mx2).exp()).collect();
    let (m1, v1) = mean_var(&z1);
    let (m2, v2) = mean_var(&z2);
    let cov = z1
        .iter()
        .zip(&z2)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - m1) * (b - m2))
        / from_usize(cfg.n_paths - 1);
    let (value, se, note) = match cfg.estimator {
        FkEstimator::Plain => {
            let var_log = v1 / (m1 * m1) / nf;
            (
                log_m1 / t,
                var_log.max(T::zero()).sqrt() / t,
                "plain (1/t) log m(t)",
            )
        }
        FkEstimator::HorizonDifference => {
            let th = t * lit(0.5);
            let var_log = (v1 / (m1 * m1) + v2 / (m2 * m2) - two * cov / (m1 * m2)) / nf;
            (
                (log_m1 - log_m2) / th,
                var_log.max(T::zero()).sqrt() / th,
                "horizon difference",
            )
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "Feynman-Kac estimate {}",
            to_f64(value)
        )));
    }
    Ok(McEstimate {
        value,
        std_error: se,
        n: cfg.n_paths,
        seed: cfg.seed,
        notes: format!("{note}; t = {}, dt = {}", to_f64(t), to_f64(dt)),
    })
}
