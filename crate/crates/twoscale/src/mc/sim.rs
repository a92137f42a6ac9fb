use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::McEstimate;
use crate::error::{Error, Result};
use crate::model::VolatilityModel;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::stats::{log_sum_exp, mean_var};

/// Settings of one Monte Carlo run of the two-scale system.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub epsilon: T,
    pub alpha: T,
    pub t: T,
    pub dt: T,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: Vec<T>,
    pub y0: Vec<T>,
}

impl<T: Real> SimConfig<T> {
    /// Config with `dt = min(0.1 eps^(alpha - 1), t / 100)`.
    pub fn new(
        epsilon: T,
        alpha: T,
        t: T,
        n_paths: usize,
        seed: u64,
        x0: Vec<T>,
        y0: Vec<T>,
    ) -> Self {
        let mut cfg = SimConfig {
            epsilon,
            alpha,
            t,
            dt: T::zero(),
            n_paths,
            seed,
            x0,
            y0,
        };
        cfg.dt = cfg.max_dt().min(t / lit(100.0));
        cfg
    }

    /// Largest admissible step, `0.1 eps^(alpha - 1)`.
    pub fn max_dt(&self) -> T {
        lit::<T>(0.1) * self.epsilon.powf(self.alpha - T::one())
    }

    /// Number of Euler steps; the step actually used is `t / steps <= dt`.
    pub fn steps(&self) -> usize {
        (self.t / self.dt)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX)
            .max(1)
    }

    pub fn validate(&self, model: &VolatilityModel<T>) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon <= T::one()) {
            return Err(Error::BadParameter {
                name: "epsilon".into(),
                reason: format!("{} is outside (0, 1]", self.epsilon),
            });
        }
        if !(self.alpha > T::one()) {
            return Err(Error::InvalidAlpha(to_f64(self.alpha)));
        }
        if !(self.t > T::zero()) || !(self.dt > T::zero()) {
            return Err(Error::BadParameter {
                name: "t/dt".into(),
                reason: "time horizon and step must be positive".into(),
            });
        }
        let cap = self.max_dt();
        if self.dt > cap * (T::one() + lit(1e-12)) {
            return Err(Error::StepTooLarge {
                dt: to_f64(self.dt),
                cap: to_f64(cap),
            });
        }
        if self.n_paths < 100 {
            return Err(Error::BadParameter {
                name: "n_paths".into(),
                reason: "at least 100 paths are required".into(),
            });
        }
        if self.x0.len() != model.n() || self.y0.len() != model.m() {
            return Err(Error::DimensionMismatch {
                what: "simulation start",
                detail: format!("x0 needs length {} and y0 length {}", model.n(), model.m()),
            });
        }
        Ok(())
    }
}

/// Terminal states of all paths, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T> {
    pub n: usize,
    pub m: usize,
    /// `n_paths x n` slow states.
    pub x: Vec<T>,
    /// `n_paths x m` fast states in `[0, 1)^m`.
    pub y: Vec<T>,
}

impl<T: Real> Samples<T> {
    pub fn len(&self) -> usize {
        self.x.len() / self.n
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn x_of(&self, path: usize) -> &[T] {
        &self.x[path * self.n..(path + 1) * self.n]
    }
}

const CHUNK: usize = 256;

/// Euler–Maruyama for
/// `dX = eps phi dt + sqrt(2 eps) sigma dW`,
/// `dY = eps^(1-alpha) b dt + sqrt(2 eps^(1-alpha)) tau dW`
/// with one `r`-dimensional increment per step shared by both equations and
/// `Y` wrapped to the unit torus. Path `k` draws from stream `k` of a ChaCha8
/// generator seeded with `cfg.seed`, so results do not depend on the thread count.
pub fn simulate<T: Real>(model: &VolatilityModel<T>, cfg: &SimConfig<T>) -> Result<Samples<T>> {
    cfg.validate(model)?;
    let (n, m, r) = (model.n(), model.m(), model.r());
    let steps = cfg.steps();
    let h = cfg.t / from_usize(steps);
    let sqrt_h = h.sqrt();
    let eps = cfg.epsilon;
    let fast = eps.powf(T::one() - cfg.alpha);
    let cx = (lit::<T>(2.0) * eps).sqrt();
    let cy = (lit::<T>(2.0) * fast).sqrt();
    let mut xs = vec![T::zero(); cfg.n_paths * n];
    let mut ys = vec![T::zero(); cfg.n_paths * m];
    xs.par_chunks_mut(CHUNK * n)
        .zip(ys.par_chunks_mut(CHUNK * m))
        .enumerate()
        .for_each(|(chunk, (xc, yc))| {
            let mut phi = vec![T::zero(); n];
            let mut sig = vec![T::zero(); n * r];
            let mut b = vec![T::zero(); m];
            let mut tau = vec![T::zero(); m * r];
            let mut dw = vec![T::zero(); r];
            for (j, (x, y)) in xc.chunks_mut(n).zip(yc.chunks_mut(m)).enumerate() {
                let path = chunk * CHUNK + j;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(path as u64);
                x.copy_from_slice(&cfg.x0);
                y.copy_from_slice(&cfg.y0);
                for v in y.iter_mut() {
                    *v -= v.floor();
                }
                for _ in 0..steps {
                    for d in dw.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *d = sqrt_h * lit(z);
                    }
                    model.phi(x, y, &mut phi);
                    model.sigma(x, y, &mut sig);
                    model.b(y, &mut b);
                    model.tau(y, &mut tau);
                    for i in 0..n {
                        let mut acc = T::zero();
                        for k in 0..r {
                            acc += sig[i * r + k] * dw[k];
                        }
                        x[i] += eps * phi[i] * h + cx * acc;
                    }
                    for i in 0..m {
                        let mut acc = T::zero();
                        for k in 0..r {
                            acc += tau[i * r + k] * dw[k];
                        }
                        let v = y[i] + fast * b[i] * h + cy * acc;
                        y[i] = v - v.floor();
                    }
                }
            }
        });
    if let Some(bad) = xs.iter().chain(&ys).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "state of path {}",
            bad / n.max(1)
        )));
    }
    Ok(Samples { n, m, x: xs, y: ys })
}

/// Terminal slow states `X_t`, `n_paths x n` row-major.
pub fn simulate_terminal<T: Real>(
    model: &VolatilityModel<T>,
    cfg: &SimConfig<T>,
) -> Result<Vec<T>> {
    simulate(model, cfg).map(|s| s.x)
}

/// `eps log E[exp(h(X_t) / eps)]` with log-sum-exp stabilization; the
/// standard error follows from the delta method on the log.
pub fn estimate_v_eps<T: Real>(
    model: &VolatilityModel<T>,
    cfg: &SimConfig<T>,
    h: &(dyn Fn(&[T]) -> T + Sync),
) -> Result<McEstimate<T>> {
    let s = simulate(model, cfg)?;
    v_eps_from_samples(&s, cfg, h)
}

/// [`estimate_v_eps`] on precomputed samples.
pub fn v_eps_from_samples<T: Real>(
    s: &Samples<T>,
    cfg: &SimConfig<T>,
    h: &(dyn Fn(&[T]) -> T + Sync),
) -> Result<McEstimate<T>> {
    let n = s.len();
    let hv: Vec<T> = (0..n).map(|k| h(s.x_of(k))).collect();
    if hv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test function value".into()));
    }
    let eps = cfg.epsilon;
    let a: Vec<T> = hv.iter().map(|&v| v / eps).collect();
    let lse = log_sum_exp(&a);
    let nf: T = from_usize(n);
    let lo = hv.iter().copied().fold(T::infinity(), T::min);
    let hi = hv.iter().copied().fold(T::neg_infinity(), T::max);
    let value = (eps * (lse - nf.ln())).max(lo).min(hi);
    let mx = a.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = a.iter().map(|&v| (v - mx).exp()).collect();
    let (mean, var) = mean_var(&w);
    let se = eps * var.sqrt() / (nf.sqrt() * mean);
    Ok(McEstimate {
        value,
        std_error: se,
        n,
        seed: cfg.seed,
        notes: format!("eps = {}, steps = {}", cfg.epsilon, cfg.steps()),
    })
}

/// Sample mean and standard error of `f(X_t)`.
pub fn sample_mean<T: Real>(s: &Samples<T>, f: impl Fn(&[T]) -> T) -> (T, T) {
    let vals: Vec<T> = (0..s.len()).map(|k| f(s.x_of(k))).collect();
    let (mean, var) = mean_var(&vals);
    (mean, (var / from_usize(vals.len())).sqrt())
}
