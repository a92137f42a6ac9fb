use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;

use super::{TorusGrid, VolatilityModel};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Sampled diagnostics of a model on a probe grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub probe_resolution: usize,
    /// Worst `|f(., y + e_k) - f(., y)|` over all coefficients.
    pub periodicity_defect: f64,
    /// `min_y lambda_min(tau tau^T)`, the worst value of `|tau^T xi|^2 / |xi|^2`.
    pub ellipticity_ratio: f64,
    pub theta: f64,
    pub sup_phi: f64,
    pub sup_sigma: f64,
    pub sup_b: f64,
    pub sup_tau: f64,
    /// Largest difference quotient observed between neighbouring probe points.
    pub lipschitz_estimate: f64,
    /// `min lambda_min(sigma sigma^T)` over the probe set.
    pub nu_hat: f64,
    /// `max lambda_max(sigma sigma^T)` over the probe set.
    pub c_hat: f64,
    /// `max |tau sigma^T|` over the probe set.
    pub tau_sigma_max: f64,
    /// Largest variation of `sigma` along `x` at fixed `y`.
    pub sigma_x_variation: f64,
    /// Largest variation of `sigma` along `y` at fixed `x`.
    pub sigma_y_variation: f64,
    pub passed: bool,
}

const PERIODICITY_TOL: f64 = 1e-10;
const TRAIT_TOL: f64 = 1e-12;

/// The periodicity threshold, widened for single precision.
fn periodicity_tol<T: Real>() -> f64 {
    PERIODICITY_TOL.max(1e3 * T::eps_f64())
}

fn trait_tol<T: Real>() -> f64 {
    TRAIT_TOL.max(1e2 * T::eps_f64())
}

/// Slow-state probe points: `{-1, 0, 1}^n`.
fn x_probes<T: Real>(n: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                [-1.0, 0.0, 1.0].into_iter().map(move |c| {
                    let mut w = v.clone();
                    w.push(lit::<T>(c));
                    w
                })
            })
            .collect();
    }
    out
}

fn call_checked<T: Real>(
    what: &'static str,
    len: usize,
    f: impl FnOnce(&mut [T]),
) -> Result<Vec<T>> {
    let mut out = vec![T::nan(); len];
    let ok = catch_unwind(AssertUnwindSafe(|| f(&mut out))).is_ok();
    if !ok {
        return Err(Error::DimensionMismatch {
            what,
            detail: format!("coefficient panicked when writing {len} entries"),
        });
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::DimensionMismatch {
            what,
            detail: format!("coefficient left entries of a {len}-entry output unset or NaN"),
        });
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::CoefficientError(format!(
            "{what} returned a non-finite value"
        )));
    }
    Ok(out)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a: f64, &b| a.max(b.abs()))
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()))
}

fn to_vec<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}

fn sym_eigen_range(a: &[f64], k: usize) -> (f64, f64) {
    let mat = DMatrix::from_row_slice(k, k, a);
    let sym = (&mat + mat.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Samples the model on a probe grid and records diagnostics without judging them.
///
/// Fails only when a coefficient writes the wrong number of entries or returns
/// non-finite values.
pub fn probe_model<T: Real>(
    model: &VolatilityModel<T>,
    probe_resolution: usize,
) -> Result<ValidationReport> {
    if probe_resolution < 8 {
        return Err(Error::precondition(format!(
            "probe resolution must be at least 8, got {probe_resolution}"
        )));
    }
    let (n, m, r) = (model.n(), model.m(), model.r());
    let grid = TorusGrid::uniform(m, probe_resolution)?;
    let xs = x_probes::<T>(n);
    let h = 1.0 / probe_resolution as f64;

    let mut y = vec![T::zero(); m];
    let mut periodicity: f64 = 0.0;
    let mut ellipticity = f64::INFINITY;
    let (mut sup_phi, mut sup_sigma, mut sup_b, mut sup_tau) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut lip: f64 = 0.0;
    let mut nu_hat = f64::INFINITY;
    let mut c_hat: f64 = 0.0;
    let mut tau_sigma: f64 = 0.0;
    let mut sx_var: f64 = 0.0;
    let mut sy_var: f64 = 0.0;

    let fast = |y: &[T]| -> Result<(Vec<f64>, Vec<f64>)> {
        let b = call_checked("b", m, |o| model.b(y, o))?;
        let t = call_checked("tau", m * r, |o| model.tau(y, o))?;
        Ok((to_vec(&b), to_vec(&t)))
    };
    let slow = |x: &[T], y: &[T]| -> Result<(Vec<f64>, Vec<f64>)> {
        let p = call_checked("phi", n, |o| model.phi(x, y, o))?;
        let s = call_checked("sigma", n * r, |o| model.sigma(x, y, o))?;
        Ok((to_vec(&p), to_vec(&s)))
    };

    let mut sigma_at_first_y: Vec<Vec<f64>> = Vec::new();
    for i in 0..grid.len() {
        grid.node(i, &mut y);
        let (b0, t0) = fast(&y)?;
        sup_b = sup_b.max(sup(&b0));
        sup_tau = sup_tau.max(sup(&t0));

        let mut a = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..m {
                a[p * m + q] = (0..r).map(|k| t0[p * r + k] * t0[q * r + k]).sum();
            }
        }
        ellipticity = ellipticity.min(sym_eigen_range(&a, m).0);

        for k in 0..m {
            let mut yk = y.clone();
            yk[k] += T::one();
            let (b1, t1) = fast(&yk)?;
            periodicity = periodicity.max(diff(&b0, &b1)).max(diff(&t0, &t1));
            let nb = grid.neighbor(i, k, 1);
            let mut yn = y.clone();
            grid.node(nb, &mut yn);
            if nb > i {
                let (b2, t2) = fast(&yn)?;
                lip = lip.max(diff(&b0, &b2) / h).max(diff(&t0, &t2) / h);
            }
        }

        for (xi, x) in xs.iter().enumerate() {
            let (p0, s0) = slow(x, &y)?;
            sup_phi = sup_phi.max(sup(&p0));
            sup_sigma = sup_sigma.max(sup(&s0));
            let mut ss = vec![0.0; n * n];
            for p in 0..n {
                for q in 0..n {
                    ss[p * n + q] = (0..r).map(|k| s0[p * r + k] * s0[q * r + k]).sum();
                }
            }
            let (lo, hi) = sym_eigen_range(&ss, n);
            nu_hat = nu_hat.min(lo);
            c_hat = c_hat.max(hi);
            for p in 0..m {
                for q in 0..n {
                    let v: f64 = (0..r).map(|k| t0[p * r + k] * s0[q * r + k]).sum();
                    tau_sigma = tau_sigma.max(v.abs());
                }
            }
            for k in 0..m {
                let mut yk = y.clone();
                yk[k] += T::one();
                let (p1, s1) = slow(x, &yk)?;
                periodicity = periodicity.max(diff(&p0, &p1)).max(diff(&s0, &s1));
                let nb = grid.neighbor(i, k, 1);
                if nb > i {
                    let mut yn = y.clone();
                    grid.node(nb, &mut yn);
                    let (p2, s2) = slow(x, &yn)?;
                    lip = lip.max(diff(&p0, &p2) / h).max(diff(&s0, &s2) / h);
                }
            }
            if i == 0 {
                sigma_at_first_y.push(s0.clone());
            }
            if xi > 0 {
                // x probes differ by 1 along at least one axis
                let (_, sprev) = slow(&xs[xi - 1], &y)?;
                let dx = xs[xi]
                    .iter()
                    .zip(&xs[xi - 1])
                    .map(|(a, b)| to_f64(*a - *b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let d = diff(&s0, &sprev);
                sx_var = sx_var.max(d);
                lip = lip.max(d / dx);
            }
        }
    }
    for x in &xs {
        let (_, s_ref) = slow(x, &vec![T::zero(); m])?;
        for i in 0..grid.len() {
            grid.node(i, &mut y);
            let (_, s) = slow(x, &y)?;
            sy_var = sy_var.max(diff(&s, &s_ref));
        }
    }

    let theta = to_f64(model.theta());
    let passed = periodicity <= periodicity_tol::<T>() && ellipticity >= theta;
    Ok(ValidationReport {
        probe_resolution,
        periodicity_defect: periodicity,
        ellipticity_ratio: ellipticity,
        theta,
        sup_phi,
        sup_sigma,
        sup_b,
        sup_tau,
        lipschitz_estimate: lip,
        nu_hat: nu_hat.max(0.0),
        c_hat,
        tau_sigma_max: tau_sigma,
        sigma_x_variation: sx_var,
        sigma_y_variation: sy_var,
        passed,
    })
}

/// Probes the model and rejects it when periodicity, ellipticity or a
/// declared structural trait fails on the probe grid.
pub fn validate_model<T: Real>(
    model: &VolatilityModel<T>,
    probe_resolution: usize,
) -> Result<ValidationReport> {
    let report = probe_model(model, probe_resolution)?;
    if report.periodicity_defect > periodicity_tol::<T>() {
        return Err(Error::PeriodicityViolation {
            defect: report.periodicity_defect,
        });
    }
    if !(report.ellipticity_ratio >= report.theta) {
        return Err(Error::EllipticityViolation {
            ratio: report.ellipticity_ratio,
            theta: report.theta,
        });
    }
    let traits = model.traits();
    let scale = report.sup_sigma.max(1.0);
    if traits.sigma_x_independent && report.sigma_x_variation > trait_tol::<T>() * scale {
        return Err(Error::CoefficientError(format!(
            "model declares sigma independent of x but it varies by {:e}",
            report.sigma_x_variation
        )));
    }
    if traits.sigma_y_independent && report.sigma_y_variation > trait_tol::<T>() * scale {
        return Err(Error::CoefficientError(format!(
            "model declares sigma independent of y but it varies by {:e}",
            report.sigma_y_variation
        )));
    }
    if traits.uncorrelated
        && report.tau_sigma_max > trait_tol::<T>() * scale * report.sup_tau.max(1.0)
    {
        return Err(Error::CoefficientError(format!(
            "model declares tau sigma^T = 0 but |tau sigma^T| reaches {:e}",
            report.tau_sigma_max
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelTraits;
    use std::f64::consts::TAU;

    fn identity_tau(theta: f64) -> VolatilityModel<f64> {
        VolatilityModel::builder("id", 1, 1, 2)
            .sigma(|_, _, o| {
                o[0] = 0.5;
                o[1] = 0.0;
            })
            .tau(|_, o| {
                o[0] = 1.0;
                o[1] = 0.0;
            })
            .b(|y, o| o[0] = (TAU * y[0]).cos())
            .theta(theta)
            .build()
            .unwrap()
    }

    #[test]
    fn identity_diffusion_has_unit_ratio() {
        let rep = validate_model(&identity_tau(1.0), 16).unwrap();
        assert!((rep.ellipticity_ratio - 1.0).abs() < 1e-15);
        assert!(rep.passed);
        assert!(rep.periodicity_defect <= 1e-10);
    }

    #[test]
    fn degenerate_tau_is_rejected() {
        let m = VolatilityModel::<f64>::builder("deg", 1, 1, 1)
            .sigma(|_, _, o| o[0] = 1.0)
            .tau(|y, o| o[0] = (TAU * y[0]).sin())
            .theta(1e-3)
            .build()
            .unwrap();
        assert!(matches!(
            validate_model(&m, 16),
            Err(Error::EllipticityViolation { .. })
        ));
    }

    #[test]
    fn aperiodic_drift_is_rejected() {
        let m = VolatilityModel::<f64>::builder("ap", 1, 1, 1)
            .sigma(|_, _, o| o[0] = 1.0)
            .tau(|_, o| o[0] = 1.0)
            .b(|y, o| o[0] = y[0])
            .build()
            .unwrap();
        assert!(matches!(
            validate_model(&m, 8),
            Err(Error::PeriodicityViolation { .. })
        ));
    }

    #[test]
    fn wrong_output_shape_is_reported() {
        let short = VolatilityModel::<f64>::builder("short", 2, 1, 2)
            .sigma(|_, _, o| o[0] = 1.0)
            .tau(|_, o| o.copy_from_slice(&[1.0, 0.0]))
            .build()
            .unwrap();
        assert!(matches!(
            probe_model(&short, 8),
            Err(Error::DimensionMismatch { what: "sigma", .. })
        ));
        let long = VolatilityModel::<f64>::builder("long", 1, 1, 1)
            .sigma(|_, _, o| o[0] = 1.0)
            .tau(|_, o| {
                o[0] = 1.0;
                o[1] = 1.0;
            })
            .build()
            .unwrap();
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let res = probe_model(&long, 8);
        std::panic::set_hook(prev);
        assert!(matches!(
            res,
            Err(Error::DimensionMismatch { what: "tau", .. })
        ));
    }

    #[test]
    fn declared_traits_are_checked() {
        let m = VolatilityModel::<f64>::builder("lies", 1, 1, 1)
            .sigma(|x, _, o| o[0] = 1.0 + 0.1 * x[0])
            .tau(|_, o| o[0] = 1.0)
            .traits(ModelTraits {
                sigma_x_independent: true,
                ..Default::default()
            })
            .build()
            .unwrap();
        assert!(matches!(
            validate_model(&m, 8),
            Err(Error::CoefficientError(_))
        ));
    }

    #[test]
    fn small_probe_resolution_is_a_precondition() {
        assert!(matches!(
            probe_model(&identity_tau(1.0), 4),
            Err(Error::Precondition(_))
        ));
    }
}
