use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

use super::OptionKind;

/// Standard normal distribution function, `erfc(-z / sqrt 2) / 2`.
pub fn norm_cdf<T: Real>(z: T) -> T {
    (-z * T::FRAC_1_SQRT_2()).erfc() * lit(0.5)
}

/// Standard normal density.
pub fn norm_pdf<T: Real>(z: T) -> T {
    (-z * z * lit(0.5)).exp() * lit(0.398_942_280_401_432_7)
}

fn check_inputs<T: Real>(s0: T, k: T, maturity: T, vol: T, r: T) -> Result<()> {
    let named = [
        ("spot", s0),
        ("strike", k),
        ("maturity", maturity),
        ("volatility", vol),
    ];
    for (name, v) in named {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::DomainError(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    if !r.is_finite() {
        return Err(Error::DomainError(format!("rate must be finite, got {r}")));
    }
    Ok(())
}

fn d1_d2<T: Real>(s0: T, k: T, maturity: T, vol: T, r: T) -> (T, T) {
    let sd = vol * maturity.sqrt();
    let d1 = ((s0 / k).ln() + (r + vol * vol * lit(0.5)) * maturity) / sd;
    (d1, d1 - sd)
}

/// Black–Scholes price of a European call.
pub fn black_scholes_call<T: Real>(s0: T, k: T, maturity: T, vol: T, r: T) -> Result<T> {
    check_inputs(s0, k, maturity, vol, r)?;
    let (d1, d2) = d1_d2(s0, k, maturity, vol, r);
    let df = (-r * maturity).exp();
    Ok((s0 * norm_cdf(d1) - k * df * norm_cdf(d2)).max(T::zero()))
}

/// Black–Scholes price of a European put.
pub fn black_scholes_put<T: Real>(s0: T, k: T, maturity: T, vol: T, r: T) -> Result<T> {
    check_inputs(s0, k, maturity, vol, r)?;
    let (d1, d2) = d1_d2(s0, k, maturity, vol, r);
    let df = (-r * maturity).exp();
    Ok((k * df * norm_cdf(-d2) - s0 * norm_cdf(-d1)).max(T::zero()))
}

pub fn black_scholes<T: Real>(
    kind: OptionKind,
    s0: T,
    k: T,
    maturity: T,
    vol: T,
    r: T,
) -> Result<T> {
    match kind {
        OptionKind::Call => black_scholes_call(s0, k, maturity, vol, r),
        OptionKind::Put => black_scholes_put(s0, k, maturity, vol, r),
    }
}

/// `d price / d vol`, identical for calls and puts.
pub fn black_scholes_vega<T: Real>(s0: T, k: T, maturity: T, vol: T, r: T) -> Result<T> {
    check_inputs(s0, k, maturity, vol, r)?;
    let (d1, _) = d1_d2(s0, k, maturity, vol, r);
    Ok(s0 * norm_pdf(d1) * maturity.sqrt())
}

/// No-arbitrage interval `(lower, upper)` of option prices.
pub fn price_bounds<T: Real>(kind: OptionKind, s0: T, k: T, maturity: T, r: T) -> (T, T) {
    let kd = k * (-r * maturity).exp();
    match kind {
        OptionKind::Call => ((s0 - kd).max(T::zero()), s0),
        OptionKind::Put => ((kd - s0).max(T::zero()), kd),
    }
}

/// Implied volatility of a call price.
pub fn implied_vol_invert<T: Real>(price: T, s0: T, k: T, maturity: T, r: T) -> Result<T> {
    implied_vol(OptionKind::Call, price, s0, k, maturity, r)
}

/// Volatility reproducing `price`: bracketing by doubling, bisection to a
/// relative width of `1e-3`, then Newton steps safeguarded by the bracket.
pub fn implied_vol<T: Real>(
    kind: OptionKind,
    price: T,
    s0: T,
    k: T,
    maturity: T,
    r: T,
) -> Result<T> {
    check_inputs(s0, k, maturity, T::one(), r)?;
    let (lower, upper) = price_bounds(kind, s0, k, maturity, r);
    if !(price > lower && price < upper) {
        return Err(Error::OutOfBounds {
            price: to_f64(price),
            lower: to_f64(lower),
            upper: to_f64(upper),
        });
    }
    let f = |v: T| black_scholes(kind, s0, k, maturity, v, r).map(|p| p - price);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut doublings = 0;
    while f(hi)? <= T::zero() {
        lo = hi;
        hi = hi + hi;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoConvergence {
                solver: "implied volatility bracket",
                iterations: doublings,
                residual: to_f64(f(hi)?),
            });
        }
    }
    let width: T = lit(1e-3);
    while hi - lo > width * hi {
        let mid = (lo + hi) * lit(0.5);
        if f(mid)? > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tiny = T::epsilon() * lit(4.0);
    let mut v = (lo + hi) * lit(0.5);
    for _ in 0..100 {
        let fv = f(v)?;
        if fv == T::zero() {
            break;
        }
        if fv > T::zero() {
            hi = v;
        } else {
            lo = v;
        }
        let vega = black_scholes_vega(s0, k, maturity, v, r)?;
        let newton = v - fv / vega;
        let next = if vega > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * lit(0.5)
        };
        let step = (next - v).abs();
        v = next;
        if step <= tiny * v || hi - lo <= tiny * v {
            break;
        }
    }
    let residual = f(v)?.abs();
    let tol = s0 * lit::<T>(1e-12).max(T::epsilon() * lit(64.0));
    if residual > tol {
        return Err(Error::NoConvergence {
            solver: "implied volatility Newton",
            iterations: 100,
            residual: to_f64(residual),
        });
    }
    Ok(v)
}
