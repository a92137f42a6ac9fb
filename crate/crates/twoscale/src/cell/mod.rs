//! Cell problems for the critical and subcritical regimes.

mod closed_form;
mod critical;
mod feynman_kac;
mod subcritical;

pub use closed_form::{h_bar_subcritical_closed_1d, h_bar_uncorrelated_max};
pub use critical::{
    critical_invariant_measure, solve_cell_critical_discount, solve_cell_critical_eigen,
    CriticalCellSolution, CriticalMeasure, CriticalMethod,
};
pub use feynman_kac::{feynman_kac_oracle, FkConfig, FkEstimator};
pub use subcritical::{solve_cell_subcritical, SubcriticalCellSolution};

use crate::error::{Error, Result};
use crate::model::TorusGrid;
use crate::scalar::{lit, Real};

/// Default discount schedule for the vanishing-discount limit.
pub fn default_deltas<T: Real>() -> Vec<T> {
    [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
        .iter()
        .map(|&d| lit(d))
        .collect()
}

/// Iteration counts and residuals reported by the cell solvers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellDiagnostics {
    /// Outer iterations (power steps, policy updates or Newton steps).
    pub iterations: usize,
    /// Krylov iterations summed over all linear solves.
    pub linear_iterations: usize,
    /// Final residual of the discrete equation.
    pub residual: f64,
    /// `delta * w_delta` averages per discount, when a discount schedule was used.
    pub discounted: Vec<(f64, f64)>,
}

fn check_resolution(grid: &TorusGrid, min: usize) -> Result<()> {
    if grid.dims().iter().any(|&d| d < min) {
        return Err(Error::precondition(format!(
            "cell solvers need at least {min} nodes per axis"
        )));
    }
    Ok(())
}

fn check_deltas<T: Real>(deltas: &[T]) -> Result<()> {
    if deltas.len() < 2 {
        return Err(Error::precondition(
            "discount schedule needs at least two values",
        ));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) || !(deltas[0] > T::zero()) {
        return Err(Error::precondition(
            "discount schedule must be positive and strictly decreasing",
        ));
    }
    if deltas[deltas.len() - 1] > lit(1e-3) {
        return Err(Error::precondition(
            "discount schedule must reach 1e-3 or below",
        ));
    }
    Ok(())
}

/// Nodewise linear extrapolation to `delta = 0` from the last two discounts,
/// averaged over nodes.
fn extrapolate<T: Real>(d1: T, u1: &[T], d2: T, u2: &[T]) -> T {
    let vals: Vec<T> = u1
        .iter()
        .zip(u2)
        .map(|(&a, &b)| (d1 * b - d2 * a) / (d1 - d2))
        .collect();
    crate::stats::pairwise_sum(&vals) / crate::scalar::from_usize(vals.len())
}

fn is_zero<T: Real>(p: &[T]) -> bool {
    crate::scalar::norm(p) < lit(1e-14)
}
