//! Short-maturity option prices and implied volatilities.

mod asymptotic;
mod black_scholes;
mod smile;

pub use asymptotic::{
    half_line_infimum, implied_vol_from_infimum, implied_vol_limit, otm_price_decay,
    otm_rate_infimum, InfimumSearch, RateEvaluator, RateInfimum,
};
pub use black_scholes::{
    black_scholes, black_scholes_call, black_scholes_put, black_scholes_vega, implied_vol,
    implied_vol_invert, norm_cdf, norm_pdf, price_bounds,
};
pub use smile::{mc_smile, SmileReport, SmileRow};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// European option on `S = e^X` with maturity `eps t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionSpec<T> {
    pub s0: T,
    pub k: T,
    pub t: T,
    pub kind: OptionKind,
    /// Short rate, used only for Black–Scholes discounting.
    pub r: T,
}

impl<T: Real> OptionSpec<T> {
    pub fn new(s0: T, k: T, t: T, kind: OptionKind, r: T) -> Result<Self> {
        for (name, v) in [("s0", s0), ("k", k), ("t", t)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::DomainError(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !r.is_finite() {
            return Err(Error::DomainError(format!("rate must be finite, got {r}")));
        }
        Ok(OptionSpec { s0, k, t, kind, r })
    }
    pub fn call(s0: T, k: T, t: T) -> Result<Self> {
        Self::new(s0, k, t, OptionKind::Call, T::zero())
    }
    pub fn put(s0: T, k: T, t: T) -> Result<Self> {
        Self::new(s0, k, t, OptionKind::Put, T::zero())
    }
    pub fn x0(&self) -> T {
        self.s0.ln()
    }
    pub fn log_strike(&self) -> T {
        self.k.ln()
    }
    pub fn is_otm(&self) -> bool {
        match self.kind {
            OptionKind::Call => self.s0 < self.k,
            OptionKind::Put => self.s0 > self.k,
        }
    }
    pub fn check_otm(&self) -> Result<()> {
        if self.is_otm() {
            Ok(())
        } else {
            Err(Error::NotOtm)
        }
    }
}
