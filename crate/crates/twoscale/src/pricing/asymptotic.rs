use crate::error::{Error, Result};
use crate::rate::{rate_general, rate_x_independent, EffectiveLagrangian, RateOptions};
use crate::scalar::{from_usize, lit, to_f64, Real};

use super::OptionSpec;

/// `y -> I(y; x0, t)` for one-dimensional Lagrangians.
#[derive(Debug, Clone)]
pub struct RateEvaluator<T: Real> {
    lagrangian: EffectiveLagrangian<T>,
    pub options: RateOptions,
}

impl<T: Real> RateEvaluator<T> {
    pub fn new(lagrangian: EffectiveLagrangian<T>, options: RateOptions) -> Result<Self> {
        if lagrangian.dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "rate evaluator",
                detail: format!("option asymptotics need n = 1, got {}", lagrangian.dim()),
            });
        }
        Ok(RateEvaluator {
            lagrangian,
            options,
        })
    }

    pub fn lagrangian(&self) -> &EffectiveLagrangian<T> {
        &self.lagrangian
    }

    /// Straight lines are optimal, so the infimum over a half-line not
    /// containing `x0` sits at its end point.
    pub fn monotone(&self) -> bool {
        self.lagrangian.x_independent()
    }

    pub fn rate(&self, x0: T, y: T, t: T) -> Result<T> {
        let r = if self.lagrangian.x_independent() {
            rate_x_independent(&self.lagrangian, &[x0], &[y], t, 1)?
        } else {
            rate_general(&self.lagrangian, &[x0], &[y], t, &self.options)?
        };
        Ok(r.value)
    }

    /// Single start on half as many segments, for scans that are re-evaluated at full options.
    pub fn coarse(&self) -> Self {
        RateEvaluator {
            lagrangian: self.lagrangian.clone(),
            options: RateOptions {
                segments: (self.options.segments / 2).max(16),
                restarts: 0,
                max_iter: self.options.max_iter.min(200),
                ..self.options
            },
        }
    }
}

/// How [`otm_rate_infimum`] locates the infimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfimumSearch {
    /// End point for monotone rates, grid search otherwise.
    Auto,
    /// Grid search with golden-section refinement regardless of monotonicity.
    Grid,
}

/// `inf I(y; x0, t)` over the out-of-the-money half-line.
#[derive(Debug, Clone, PartialEq)]
pub struct RateInfimum<T> {
    pub value: T,
    pub argmin: T,
    /// Outer end of the searched interval; zero width for the end-point rule.
    pub search_end: T,
    pub evaluations: usize,
}

const GRID_POINTS: usize = 17;

/// Infimum of `I(y; x0, t)` over the half-line beyond `b` as seen from `x0`.
///
/// The search interval ends where the lower growth bound
/// `(y - x0)^2 / (4 c t)` exceeds `I(b)`, widened by 5%. The scan uses
/// [`RateEvaluator::coarse`]; its best point is re-evaluated at full options.
pub fn half_line_infimum<T: Real>(
    eval: &RateEvaluator<T>,
    x0: T,
    b: T,
    t: T,
    search: InfimumSearch,
) -> Result<RateInfimum<T>> {
    if b == x0 {
        return Err(Error::precondition("half-line must not start at x0"));
    }
    let at_b = eval.rate(x0, b, t)?;
    if search == InfimumSearch::Auto && eval.monotone() {
        return Ok(RateInfimum {
            value: at_b,
            argmin: b,
            search_end: b,
            evaluations: 1,
        });
    }
    let (_, c) = eval.lagrangian().growth();
    let reach = (lit::<T>(4.0) * c * t * at_b).sqrt() * lit(1.05);
    let dir = if b > x0 { T::one() } else { -T::one() };
    let end = x0 + dir * reach;
    let mut best = RateInfimum {
        value: at_b,
        argmin: b,
        search_end: end,
        evaluations: 1,
    };
    if (end - b) * dir <= T::zero() {
        return Ok(best);
    }
    let scan = eval.coarse();
    let step = (end - b) / from_usize(GRID_POINTS - 1);
    let mut values = vec![scan.rate(x0, b, t)?];
    for i in 1..GRID_POINTS {
        values.push(scan.rate(x0, b + step * from_usize(i), t)?);
    }
    best.evaluations += GRID_POINTS;
    let k = values
        .iter()
        .enumerate()
        .fold(0, |a, (i, v)| if *v < values[a] { i } else { a });
    if k == 0 {
        return Ok(best);
    }
    let lo = b + step * from_usize(k - 1);
    let hi = b + step * from_usize((k + 1).min(GRID_POINTS - 1));
    let gr: T = lit(0.618_033_988_749_894_9);
    let (mut a, mut z) = (lo, hi);
    let mut c1 = z - gr * (z - a);
    let mut c2 = a + gr * (z - a);
    let mut f1 = scan.rate(x0, c1, t)?;
    let mut f2 = scan.rate(x0, c2, t)?;
    best.evaluations += 2;
    for _ in 0..40 {
        if (z - a).abs() <= lit::<T>(1e-6) * (T::one() + b.abs()) {
            break;
        }
        if f1 < f2 {
            z = c2;
            c2 = c1;
            f2 = f1;
            c1 = z - gr * (z - a);
            f1 = scan.rate(x0, c1, t)?;
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + gr * (z - a);
            f2 = scan.rate(x0, c2, t)?;
        }
        best.evaluations += 1;
    }
    let y = if f1 < f2 { c1 } else { c2 };
    let v = eval.rate(x0, y, t)?;
    best.evaluations += 1;
    if v < best.value {
        best.value = v;
        best.argmin = y;
    }
    Ok(best)
}

/// Infimum of the rate over `y > log K` (calls) or `y < log K` (puts).
pub fn otm_rate_infimum<T: Real>(
    eval: &RateEvaluator<T>,
    spec: &OptionSpec<T>,
    search: InfimumSearch,
) -> Result<RateInfimum<T>> {
    spec.check_otm()?;
    half_line_infimum(eval, spec.x0(), spec.log_strike(), spec.t, search)
}

/// `lim eps log E[payoff]`, the negated rate infimum over the
/// out-of-the-money half-line.
pub fn otm_price_decay<T: Real>(eval: &RateEvaluator<T>, spec: &OptionSpec<T>) -> Result<T> {
    otm_rate_infimum(eval, spec, InfimumSearch::Auto).map(|r| -r.value)
}

/// Short-maturity limit of the squared implied volatility,
/// `(log K - x0)^2 / (2 t inf I)`.
pub fn implied_vol_limit<T: Real>(eval: &RateEvaluator<T>, spec: &OptionSpec<T>) -> Result<T> {
    let inf = otm_rate_infimum(eval, spec, InfimumSearch::Auto)?.value;
    implied_vol_from_infimum(spec, inf)
}

/// `(log K - x0)^2 / (2 t inf)` for a precomputed rate infimum `inf`.
pub fn implied_vol_from_infimum<T: Real>(spec: &OptionSpec<T>, inf: T) -> Result<T> {
    let d = spec.log_strike() - spec.x0();
    let floor = lit::<T>(1e-14) * d * d;
    if !(inf > floor) {
        return Err(Error::DegenerateRate(to_f64(inf)));
    }
    Ok(d * d / (lit::<T>(2.0) * spec.t * inf))
}
