//! Two-scale stochastic volatility models.
//!
//! A model is the coefficient tuple `(phi, sigma, b, tau)` of
//!
//! ```text
//! dX = eps phi(X, Y) dt + sqrt(2 eps) sigma(X, Y) dW
//! dY = eps^(1-alpha) b(Y) dt + sqrt(2 eps^(1-alpha)) tau(Y) dW
//! ```
//!
//! with `X` in `R^n`, `Y` on the unit torus `[0,1)^m` and a single `r`-dimensional
//! Brownian motion `W` shared by both equations.

mod catalog;
mod grid;
mod regime;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use catalog::{catalog_model, catalog_names, Params};
pub use grid::{GridFunction, TorusGrid};
pub use regime::{classify_regime, Regime, RegimeKind};
pub use validate::{probe_model, validate_model, ValidationReport};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Coefficient of the slow equation, `(x, y, out)`; `out` is row-major.
pub type SlowCoef<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;
/// Coefficient of the fast equation, `(y, out)`; `out` is row-major.
pub type FastCoef<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;

/// Structural properties a model declares about itself. `validate_model`
/// checks each declared property on the probe grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelTraits {
    /// `sigma(x, y)` does not depend on `x`.
    pub sigma_x_independent: bool,
    /// `sigma(x, y)` does not depend on `y`.
    pub sigma_y_independent: bool,
    /// `tau sigma^T = 0`: slow and fast noises use disjoint Brownian columns.
    pub uncorrelated: bool,
}

/// Coefficient tuple of a two-scale model.
///
/// Coefficient callables must be pure. Models are cheap to clone and can be
/// shared across threads.
#[derive(Clone)]
pub struct VolatilityModel<T: Real> {
    name: String,
    n: usize,
    m: usize,
    r: usize,
    phi: SlowCoef<T>,
    sigma: SlowCoef<T>,
    b: FastCoef<T>,
    tau: FastCoef<T>,
    theta: T,
    lipschitz_bound: T,
    traits: ModelTraits,
    params: Vec<(String, f64)>,
}

impl<T: Real> fmt::Debug for VolatilityModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolatilityModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("r", &self.r)
            .field("theta", &self.theta)
            .field("traits", &self.traits)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl<T: Real> VolatilityModel<T> {
    pub fn builder(name: impl Into<String>, n: usize, m: usize, r: usize) -> ModelBuilder<T> {
        ModelBuilder {
            name: name.into(),
            n,
            m,
            r,
            phi: None,
            sigma: None,
            b: None,
            tau: None,
            theta: T::one(),
            lipschitz_bound: T::one(),
            traits: ModelTraits::default(),
            params: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    /// Slow dimension.
    pub fn n(&self) -> usize {
        self.n
    }
    /// Fast dimension.
    pub fn m(&self) -> usize {
        self.m
    }
    /// Brownian dimension.
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn theta(&self) -> T {
        self.theta
    }
    pub fn lipschitz_bound(&self) -> T {
        self.lipschitz_bound
    }
    pub fn traits(&self) -> ModelTraits {
        self.traits
    }
    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    #[inline]
    pub fn phi(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.phi)(x, y, out)
    }
    /// Writes the `n x r` matrix `sigma(x, y)` row-major into `out`.
    #[inline]
    pub fn sigma(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.sigma)(x, y, out)
    }
    #[inline]
    pub fn b(&self, y: &[T], out: &mut [T]) {
        (self.b)(y, out)
    }
    /// Writes the `m x r` matrix `tau(y)` row-major into `out`.
    #[inline]
    pub fn tau(&self, y: &[T], out: &mut [T]) {
        (self.tau)(y, out)
    }

    /// Same model with the slow drift replaced.
    pub fn with_phi(&self, phi: SlowCoef<T>) -> Self {
        let mut out = self.clone();
        out.phi = phi;
        out
    }

    /// Scratch buffers sized for this model.
    pub fn scratch(&self) -> Scratch<T> {
        Scratch {
            sigma: vec![T::zero(); self.n * self.r],
            tau: vec![T::zero(); self.m * self.r],
            sp: vec![T::zero(); self.r],
        }
    }

    /// `sigma(x, y)^T p` into `scratch.sp`, returning `|sigma^T p|^2`.
    pub fn sigma_t_p(&self, x: &[T], y: &[T], p: &[T], s: &mut Scratch<T>) -> T {
        self.sigma(x, y, &mut s.sigma);
        let r = self.r;
        let mut sq = T::zero();
        for j in 0..r {
            let mut acc = T::zero();
            for (i, &pi) in p.iter().enumerate() {
                acc += s.sigma[i * r + j] * pi;
            }
            s.sp[j] = acc;
            sq += acc * acc;
        }
        sq
    }

    /// `|sigma(x, y)^T p|^2`.
    pub fn sigma_t_p_sq(&self, x: &[T], y: &[T], p: &[T], s: &mut Scratch<T>) -> T {
        self.sigma_t_p(x, y, p, s)
    }

    /// Diffusion matrix `a = tau tau^T` at `y`, `m x m` row-major.
    pub fn diffusion(&self, y: &[T], s: &mut Scratch<T>, a: &mut [T]) {
        self.tau(y, &mut s.tau);
        let (m, r) = (self.m, self.r);
        for i in 0..m {
            for j in 0..m {
                let mut acc = T::zero();
                for k in 0..r {
                    acc += s.tau[i * r + k] * s.tau[j * r + k];
                }
                a[i * m + j] = acc;
            }
        }
    }

    /// `tau(y) sigma(x, y)^T p` into `out` (length `m`), also returning
    /// `|sigma^T p|^2`. Leaves `tau(y)` in `s.tau`.
    pub fn tau_sigma_t_p(&self, x: &[T], y: &[T], p: &[T], s: &mut Scratch<T>, out: &mut [T]) -> T {
        let v = self.sigma_t_p(x, y, p, s);
        self.tau(y, &mut s.tau);
        let r = self.r;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in 0..r {
                acc += s.tau[i * r + k] * s.sp[k];
            }
            *o = acc;
        }
        v
    }
}

/// Reusable buffers for coefficient evaluation.
#[derive(Debug, Clone)]
pub struct Scratch<T> {
    pub sigma: Vec<T>,
    pub tau: Vec<T>,
    pub sp: Vec<T>,
}

/// Builder for [`VolatilityModel`]. Missing `phi` and `b` default to zero.
pub struct ModelBuilder<T: Real> {
    name: String,
    n: usize,
    m: usize,
    r: usize,
    phi: Option<SlowCoef<T>>,
    sigma: Option<SlowCoef<T>>,
    b: Option<FastCoef<T>>,
    tau: Option<FastCoef<T>>,
    theta: T,
    lipschitz_bound: T,
    traits: ModelTraits,
    params: Vec<(String, f64)>,
}

impl<T: Real> ModelBuilder<T> {
    pub fn phi(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.phi = Some(Arc::new(f));
        self
    }
    pub fn sigma(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.sigma = Some(Arc::new(f));
        self
    }
    pub fn b(mut self, f: impl Fn(&[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.b = Some(Arc::new(f));
        self
    }
    pub fn tau(mut self, f: impl Fn(&[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.tau = Some(Arc::new(f));
        self
    }
    pub fn theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }
    pub fn lipschitz_bound(mut self, l: T) -> Self {
        self.lipschitz_bound = l;
        self
    }
    pub fn traits(mut self, traits: ModelTraits) -> Self {
        self.traits = traits;
        self
    }
    pub fn param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.push((key.into(), value));
        self
    }

    pub fn build(self) -> Result<VolatilityModel<T>> {
        if self.n == 0 || self.m == 0 || self.r == 0 {
            return Err(Error::DimensionMismatch {
                what: "model",
                detail: format!(
                    "dimensions must be positive, got n={} m={} r={}",
                    self.n, self.m, self.r
                ),
            });
        }
        if !(self.theta > T::zero()) {
            return Err(Error::BadParameter {
                name: "theta".into(),
                reason: format!("must be positive, got {}", self.theta),
            });
        }
        if !(self.lipschitz_bound > T::zero()) {
            return Err(Error::BadParameter {
                name: "lipschitz_bound".into(),
                reason: format!("must be positive, got {}", self.lipschitz_bound),
            });
        }
        let sigma = self.sigma.ok_or_else(|| Error::BadParameter {
            name: "sigma".into(),
            reason: "slow diffusion is required".into(),
        })?;
        let tau = self.tau.ok_or_else(|| Error::BadParameter {
            name: "tau".into(),
            reason: "fast diffusion is required".into(),
        })?;
        let phi = self
            .phi
            .unwrap_or_else(|| Arc::new(|_: &[T], _: &[T], out: &mut [T]| out.fill(T::zero())));
        let b = self
            .b
            .unwrap_or_else(|| Arc::new(|_: &[T], out: &mut [T]| out.fill(T::zero())));
        Ok(VolatilityModel {
            name: self.name,
            n: self.n,
            m: self.m,
            r: self.r,
            phi,
            sigma,
            b,
            tau,
            theta: self.theta,
            lipschitz_bound: self.lipschitz_bound,
            traits: self.traits,
            params: self.params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> VolatilityModel<f64> {
        VolatilityModel::builder("toy", 2, 1, 3)
            .sigma(|_, y, out| {
                out.fill(0.0);
                out[0] = 1.0 + y[0];
                out[4] = 2.0;
            })
            .tau(|_, out| {
                out.copy_from_slice(&[0.0, 0.5, 1.0]);
            })
            .build()
            .unwrap()
    }

    #[test]
    fn sigma_t_p_contracts_rows() {
        let m = toy();
        let mut s = m.scratch();
        let v = m.sigma_t_p(&[0.0, 0.0], &[0.5], &[2.0, 3.0], &mut s);
        assert_eq!(s.sp, vec![3.0, 6.0, 0.0]);
        assert_eq!(v, 45.0);
    }

    #[test]
    fn tau_sigma_product() {
        let m = toy();
        let mut s = m.scratch();
        let mut out = [0.0];
        m.tau_sigma_t_p(&[0.0, 0.0], &[0.5], &[2.0, 3.0], &mut s, &mut out);
        assert_eq!(out[0], 3.0);
        let mut a = [0.0];
        m.diffusion(&[0.1], &mut s, &mut a);
        assert_eq!(a[0], 1.25);
    }

    #[test]
    fn builder_rejects_missing_tau_and_zero_dims() {
        let e = VolatilityModel::<f64>::builder("x", 1, 1, 1)
            .sigma(|_, _, o| o[0] = 1.0)
            .build()
            .unwrap_err();
        assert!(matches!(e, Error::BadParameter { .. }));
        let e = VolatilityModel::<f64>::builder("x", 0, 1, 1)
            .sigma(|_, _, o| o[0] = 1.0)
            .tau(|_, o| o[0] = 1.0)
            .build()
            .unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn defaults_are_zero_drifts() {
        let m = toy();
        let mut out = [1.0, 1.0];
        m.phi(&[0.0, 0.0], &[0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        let mut out = [1.0];
        m.b(&[0.3], &mut out);
        assert_eq!(out, [0.0]);
    }
}
