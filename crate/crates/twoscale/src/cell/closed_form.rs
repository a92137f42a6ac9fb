use crate::error::{Error, Result};
use crate::model::{TorusGrid, VolatilityModel};
use crate::scalar::{from_usize, lit, Real};

/// `(int sigma/tau)^2 (int 1/tau)^-2 p^2` for `n = m = r = 1`, by the periodic
/// trapezoid rule on `quad_points` nodes.
pub fn h_bar_subcritical_closed_1d<T: Real>(
    sigma: impl Fn(T) -> T,
    tau: impl Fn(T) -> T,
    p: T,
    quad_points: usize,
) -> Result<T> {
    if quad_points < 2 {
        return Err(Error::precondition("need at least two quadrature points"));
    }
    let nq: T = from_usize(quad_points);
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..quad_points {
        let y = from_usize::<T>(i) / nq;
        let t = tau(y);
        if !(t > T::zero()) {
            return Err(Error::DomainError(format!(
                "tau({y}) = {t} is not positive"
            )));
        }
        let s = sigma(y);
        if s < T::zero() {
            return Err(Error::DomainError(format!("sigma({y}) = {s} is negative")));
        }
        num += s / t;
        den += T::one() / t;
    }
    let ratio = num / den;
    Ok(ratio * ratio * p * p)
}

/// `max_y |sigma(x, y)^T p|^2`: grid maximum polished by golden-section search
/// along each axis around the best node.
pub fn h_bar_uncorrelated_max<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
) -> T {
    let m = grid.dim();
    let mut y = vec![T::zero(); m];
    let mut s = model.scratch();
    let mut best = T::neg_infinity();
    let mut arg = vec![T::zero(); m];
    for i in 0..grid.len() {
        grid.node(i, &mut y);
        let v = model.sigma_t_p_sq(x, &y, p, &mut s);
        if v > best {
            best = v;
            arg.copy_from_slice(&y);
        }
    }
    let gr: T = lit(0.618_033_988_749_894_9);
    for _round in 0..2 {
        for k in 0..m {
            let h: T = grid.spacing(k);
            let (mut a, mut b) = (arg[k] - h, arg[k] + h);
            let mut f = |t: T, arg: &mut Vec<T>| {
                let old = arg[k];
                arg[k] = t;
                let v = model.sigma_t_p_sq(x, arg, p, &mut s);
                arg[k] = old;
                v
            };
            let mut c = b - gr * (b - a);
            let mut d = a + gr * (b - a);
            let mut fc = f(c, &mut arg);
            let mut fd = f(d, &mut arg);
            for _ in 0..60 {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - gr * (b - a);
                    fc = f(c, &mut arg);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + gr * (b - a);
                    fd = f(d, &mut arg);
                }
            }
            let (t, v) = if fc > fd { (c, fc) } else { (d, fd) };
            if v > best {
                best = v;
                arg[k] = t;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog_model, Params};
    use std::f64::consts::TAU;

    #[test]
    fn constants_cancel() {
        let v = h_bar_subcritical_closed_1d(|_: f64| 0.7, |_: f64| 1.9, 2.0, 16).unwrap();
        assert!((v - 0.49 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn mean_of_sine_volatility() {
        let v = h_bar_subcritical_closed_1d(|y: f64| 1.0 + 0.5 * (TAU * y).sin(), |_| 1.0, 1.0, 64)
            .unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert_eq!(
            h_bar_subcritical_closed_1d(|_: f64| 1.0, |_: f64| 1.0, 0.0, 8).unwrap(),
            0.0
        );
        let h2 = h_bar_subcritical_closed_1d(
            |y: f64| 1.0 + 0.5 * (TAU * y).sin(),
            |y: f64| 1.0 + 0.25 * (TAU * y).cos(),
            2.0,
            256,
        )
        .unwrap();
        let h1 = h_bar_subcritical_closed_1d(
            |y: f64| 1.0 + 0.5 * (TAU * y).sin(),
            |y: f64| 1.0 + 0.25 * (TAU * y).cos(),
            1.0,
            256,
        )
        .unwrap();
        assert!((h2 - 4.0 * h1).abs() < 1e-13);
    }

    #[test]
    fn rejects_nonpositive_tau() {
        assert!(matches!(
            h_bar_subcritical_closed_1d(|_| 1.0, |y: f64| (TAU * y).sin(), 1.0, 16),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn max_formula_on_sine() {
        let m = catalog_model::<f64>("sine-1d", &Params::new()).unwrap();
        let g = TorusGrid::uniform(1, 37).unwrap();
        let v = h_bar_uncorrelated_max(&m, &g, &[0.0], &[1.0]);
        assert!((v - 2.25).abs() < 1e-10, "{v}");
    }
}
