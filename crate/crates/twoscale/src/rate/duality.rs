use super::{hopf_lax, solve_effective_pde, EffectiveLagrangian, LineGrid, TestFunction};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Lower bound on `I(x; x0, t)` from a finite family of test functions.
#[derive(Debug, Clone)]
pub struct DualityReport<T> {
    /// `max_h { h(x) - v^h(t, x0) }` over the family.
    pub lower_bound: T,
    /// Label of the maximizing test function.
    pub best: String,
    /// Rate value the bound is compared with.
    pub rate: T,
    /// `(rate - lower_bound) / rate`, zero when the rate vanishes.
    pub relative_gap: T,
    /// `h(x) - v^h(t, x0)` per family member.
    pub values: Vec<(String, T)>,
    /// `lower_bound <= rate + tol`.
    pub passed: bool,
}

/// Sixteen Gaussian wells centred at `x` and four caps with knot at `x`,
/// scaled by `S = |x - x0|^2 / (4 nu t)` and `max(|x - x0|, sqrt(c t))`.
pub fn default_family<T: Real>(x0: T, x: T, t: T, growth: (T, T)) -> Vec<TestFunction<T>> {
    let (nu, c) = growth;
    let d = (x - x0).abs();
    let s = if d > T::zero() && nu > T::zero() {
        d * d / (lit::<T>(4.0) * nu * t)
    } else {
        T::one()
    };
    let scale = d.max((c * t).sqrt()).max(lit(1e-6));
    let mut out = Vec::with_capacity(20);
    for depth in [0.5, 1.0, 2.0, 4.0] {
        for width in [0.05, 0.1, 0.2, 0.4] {
            out.push(TestFunction::Well {
                center: x,
                depth: s * lit(depth),
                width: scale * lit(width),
            });
        }
    }
    let dir = if x >= x0 { T::one() } else { -T::one() };
    for slope in [1.0, 2.0, 4.0, 8.0] {
        out.push(TestFunction::Cap {
            knot: x,
            slope: dir * lit::<T>(slope) * s / scale,
            floor: -s * lit(4.0),
        });
    }
    out
}

/// Compares `max_h { h(x) - v^h(t, x0) }` over `family` with `rate`.
///
/// `v^h(t, x0)` comes from the Hopf–Lax formula when `L` ignores `x`, and from
/// the effective PDE otherwise. By duality every member gives a lower bound on
/// the rate function.
pub fn rate_from_duality_check<T: Real>(
    l: &EffectiveLagrangian<T>,
    x0: T,
    x: T,
    t: T,
    family: &[TestFunction<T>],
    rate: T,
    tol: T,
) -> Result<DualityReport<T>> {
    if l.dim() != 1 {
        return Err(Error::precondition(
            "duality check supports one-dimensional models",
        ));
    }
    if family.is_empty() {
        return Err(Error::precondition("test family is empty"));
    }
    let (_, c) = l.growth();
    let mut values = Vec::with_capacity(family.len());
    for h in family {
        let v = if l.x_independent() {
            hopf_lax(l, h, t, x0)?
        } else {
            let osc = h.sup() - h.inf();
            if !osc.is_finite() {
                return Err(Error::precondition(
                    "PDE route needs bounded test functions",
                ));
            }
            let w = (lit::<T>(4.0) * c * t * osc).sqrt() * lit(1.5) + lit(0.5);
            let grid = LineGrid::new(x0.min(x) - w, x0.max(x) + w, 401)?;
            solve_effective_pde(l.hamiltonian().as_ref(), h, t, grid, lit(0.5))?.interpolate(x0)
        };
        values.push((h.label(), h.eval(x) - v));
    }
    let (best, lower) = values
        .iter()
        .fold((String::new(), T::neg_infinity()), |acc, (k, v)| {
            if *v > acc.1 {
                (k.clone(), *v)
            } else {
                acc
            }
        });
    let relative_gap = if rate > T::zero() {
        (rate - lower) / rate
    } else {
        T::zero()
    };
    Ok(DualityReport {
        lower_bound: lower,
        best,
        rate,
        relative_gap,
        values,
        passed: lower <= rate + tol,
    })
}
