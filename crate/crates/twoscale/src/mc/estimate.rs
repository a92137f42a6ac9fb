use std::fmt;

use crate::scalar::Real;

/// A Monte Carlo estimate together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate<T> {
    pub value: T,
    pub std_error: T,
    pub n: usize,
    pub seed: u64,
    pub notes: String,
}

impl<T: Real> McEstimate<T> {
    /// `true` when `target` lies within `k` standard errors of the estimate.
    pub fn brackets(&self, target: T, k: T) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

impl<T: Real> fmt::Display for McEstimate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ± {} (n = {}, seed = {})",
            self.value, self.std_error, self.n, self.seed
        )
    }
}
