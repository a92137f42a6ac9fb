//! Homogenization toolkit for two-scale stochastic volatility models.
//!
//! The crate computes effective Hamiltonians `H(x, p)` in the supercritical,
//! critical and subcritical regimes, their Legendre transforms and the
//! resulting large-deviation rate functions, and short-maturity option price
//! and implied volatility asymptotics. Monte Carlo simulation of the
//! two-scale SDE is provided to check the asymptotics empirically.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.
//!
//! ```
//! use std::sync::Arc;
//! use twoscale::hamiltonian::{EffectiveHamiltonian, HamiltonianOptions};
//! use twoscale::model::{catalog_model, classify_regime, Params};
//! use twoscale::pricing::{implied_vol_limit, OptionSpec, RateEvaluator};
//! use twoscale::rate::{EffectiveLagrangian, RateOptions};
//!
//! # fn main() -> twoscale::Result<()> {
//! let model: twoscale::Model = catalog_model("sine-1d", &Params::new())?;
//! let h = EffectiveHamiltonian::new(&model, classify_regime(4.0)?, HamiltonianOptions::default())?;
//! let eval = RateEvaluator::new(EffectiveLagrangian::new(Arc::new(h)), RateOptions::default())?;
//! let var = implied_vol_limit(&eval, &OptionSpec::call(1.0, 1.2, 1.0)?)?;
//! assert!((var - 2.25).abs() < 1e-3);
//! # Ok(())
//! # }
//! ```

pub mod cell;
pub mod error;
pub mod generator;
pub mod hamiltonian;
pub mod invariant;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod pricing;
pub mod rate;
pub mod scalar;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

/// Model with `f64` coefficients.
pub type Model = model::VolatilityModel<f64>;
/// Grid function with `f64` values.
pub type Field = model::GridFunction<f64>;
/// Invariant measure with `f64` density.
pub type Measure = invariant::InvariantMeasure<f64>;
