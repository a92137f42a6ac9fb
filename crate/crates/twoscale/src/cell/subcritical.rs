use super::{check_deltas, check_resolution, extrapolate, is_zero, CellDiagnostics};
use crate::error::{Error, Result};
use crate::generator::check_grid;
use crate::linalg::{gmres, Csr, GmresOptions, Ilu0};
use crate::model::{GridFunction, TorusGrid, VolatilityModel};
use crate::scalar::{from_usize, lit, max_abs, to_f64, Real};
use crate::stats::pairwise_sum;

/// Solution of the subcritical cell problem at one `(x, p)`.
#[derive(Debug, Clone)]
pub struct SubcriticalCellSolution<T> {
    pub h_bar: T,
    /// `sqrt(h_bar)`, positively 1-homogeneous in `p`.
    pub h_zero: T,
    /// Corrector at the smallest discount, normalized to `w(0) = 0`.
    pub corrector: GridFunction<T>,
    pub tol: T,
    pub diagnostics: CellDiagnostics,
}

/// Node data for `H_i(P) = |tau_i^T P + sigma_i^T p|^2`.
struct Local<T> {
    m: usize,
    r: usize,
    tau: Vec<T>,
    sp: Vec<T>,
}

impl<T: Real> Local<T> {
    /// Value of `H_i(P)` and its gradient in `P`.
    fn eval(&self, i: usize, pv: &[T], grad: &mut [T], z: &mut [T]) -> T {
        let (m, r) = (self.m, self.r);
        let tau = &self.tau[i * m * r..(i + 1) * m * r];
        let sp = &self.sp[i * r..(i + 1) * r];
        let mut h = T::zero();
        for k in 0..r {
            let mut acc = sp[k];
            for j in 0..m {
                acc += tau[j * r + k] * pv[j];
            }
            z[k] = acc;
            h += acc * acc;
        }
        for j in 0..m {
            let mut acc = T::zero();
            for k in 0..r {
                acc += tau[j * r + k] * z[k];
            }
            grad[j] = acc + acc;
        }
        h
    }
}

struct Scheme<'a, T> {
    grid: &'a TorusGrid,
    local: Local<T>,
    h: Vec<T>,
}

impl<T: Real> Scheme<'_, T> {
    /// Lax–Friedrichs residual
    /// `G_i = delta w_i - H_i(Pbar) - sum_k theta_ik (D+_k w - D-_k w) / 2`.
    /// With `update`, raises `theta` to `1.2 max |dH/dP_k|` over the centred and
    /// one-sided gradients and reports whether any entry grew.
    fn residual(
        &self,
        delta: T,
        w: &[T],
        theta: &mut [T],
        update: bool,
        out: &mut [T],
        dh: &mut [T],
    ) -> bool {
        let m = self.grid.dim();
        let mut pv = vec![T::zero(); m];
        let mut pplus = vec![T::zero(); m];
        let mut pminus = vec![T::zero(); m];
        let mut grad = vec![T::zero(); m];
        let mut z = vec![T::zero(); self.local.r];
        let mut grew = false;
        let safety: T = lit(1.2);
        for i in 0..self.grid.len() {
            for k in 0..m {
                let up = w[self.grid.neighbor(i, k, 1)];
                let dn = w[self.grid.neighbor(i, k, -1)];
                pplus[k] = (up - w[i]) / self.h[k];
                pminus[k] = (w[i] - dn) / self.h[k];
                pv[k] = (pplus[k] + pminus[k]) * lit(0.5);
            }
            let hv = self.local.eval(i, &pv, &mut grad, &mut z);
            dh[i * m..(i + 1) * m].copy_from_slice(&grad);
            if update {
                let mut bound = grad.iter().map(|g| g.abs()).collect::<Vec<_>>();
                for k in 0..m {
                    for side in [&pplus, &pminus] {
                        let keep = pv[k];
                        pv[k] = side[k];
                        self.local.eval(i, &pv, &mut grad, &mut z);
                        pv[k] = keep;
                        bound[k] = bound[k].max(grad[k].abs());
                    }
                    let want = safety * bound[k];
                    if want > theta[i * m + k] {
                        theta[i * m + k] = want;
                        grew = true;
                    }
                }
            }
            let mut visc = T::zero();
            for k in 0..m {
                visc += theta[i * m + k] * (pplus[k] - pminus[k]) * lit(0.5);
            }
            out[i] = delta * w[i] - hv - visc;
        }
        grew
    }

    fn jacobian(&self, delta: T, theta: &[T], dh: &[T]) -> Csr<T> {
        let m = self.grid.dim();
        let mut trip = Vec::with_capacity(self.grid.len() * (2 * m + 1));
        let half: T = lit(0.5);
        for i in 0..self.grid.len() {
            let mut d = delta;
            for k in 0..m {
                let th = theta[i * m + k];
                let hk = self.h[k];
                d += th / hk;
                let g = dh[i * m + k];
                trip.push((i, self.grid.neighbor(i, k, 1), -(g + th) * half / hk));
                trip.push((i, self.grid.neighbor(i, k, -1), (g - th) * half / hk));
            }
            trip.push((i, i, d));
        }
        Csr::from_triplets(self.grid.len(), trip)
    }
}

/// Subcritical `H` as the vanishing-discount limit of
/// `delta w - |tau^T Dw + sigma^T p|^2 = 0` on the torus.
///
/// Each discounted problem is discretized by a local Lax–Friedrichs scheme with
/// per-node dissipation `theta >= 1.2 |dH/dP|`, never decreased during a solve,
/// and solved by damped Newton iteration. The returned value extrapolates
/// `delta w_delta` linearly to `delta = 0` from the last two discounts.
pub fn solve_cell_subcritical<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
    deltas: &[T],
    tol: T,
) -> Result<SubcriticalCellSolution<T>> {
    check_grid(model, grid)?;
    check_resolution(grid, 32)?;
    check_deltas(deltas)?;
    if x.len() != model.n() || p.len() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "subcritical cell problem",
            detail: format!("x and p must have length {}", model.n()),
        });
    }
    let n = grid.len();
    if is_zero(p) {
        return Ok(SubcriticalCellSolution {
            h_bar: T::zero(),
            h_zero: T::zero(),
            corrector: GridFunction::new(grid.clone(), vec![T::zero(); n])?,
            tol,
            diagnostics: CellDiagnostics::default(),
        });
    }
    let (m, r) = (model.m(), model.r());
    let mut local = Local {
        m,
        r,
        tau: vec![T::zero(); n * m * r],
        sp: vec![T::zero(); n * r],
    };
    let mut y = vec![T::zero(); m];
    let mut s = model.scratch();
    let mut vmax = T::zero();
    for i in 0..n {
        grid.node(i, &mut y);
        let v = model.sigma_t_p(x, &y, p, &mut s);
        vmax = vmax.max(v);
        local.sp[i * r..(i + 1) * r].copy_from_slice(&s.sp);
        model.tau(&y, &mut local.tau[i * m * r..(i + 1) * m * r]);
    }
    let scale = vmax.max(T::one());
    let scheme = Scheme {
        grid,
        local,
        h: (0..m).map(|k| grid.spacing(k)).collect(),
    };
    let nf: T = from_usize(n);
    let inner_tol = (lit::<T>(1e-10) * scale).max(T::epsilon() * lit(1e4) * scale);
    let opts = GmresOptions {
        rtol: (T::eps_f64() * 1e4).max(1e-12),
        ..Default::default()
    };

    let mut diag = CellDiagnostics::default();
    let mut w = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut gt = vec![T::zero(); n];
    let mut dh = vec![T::zero(); n * m];
    let mut dh_scratch = vec![T::zero(); n * m];
    let mut prev: Option<(T, Vec<T>)> = None;
    let mut last: Option<(T, Vec<T>)> = None;
    let max_newton = 300;

    for &delta in deltas {
        match &last {
            Some((_, up)) => {
                let mean_u = pairwise_sum(up) / nf;
                let mean_w = pairwise_sum(&w) / nf;
                for wi in w.iter_mut() {
                    *wi = *wi - mean_w + mean_u / delta;
                }
            }
            None => w.fill(vmax / delta),
        }
        let mut theta = vec![T::zero(); n * m];
        let mut converged = false;
        for _ in 0..max_newton {
            let grew = scheme.residual(delta, &w, &mut theta, true, &mut g, &mut dh);
            let res = max_abs(&g);
            diag.residual = to_f64(res);
            let jac = scheme.jacobian(delta, &theta, &dh);
            let floor = lit::<T>(16.0) * T::epsilon() * jac.norm_inf() * max_abs(&w);
            if !grew && res <= inner_tol.max(floor) {
                converged = true;
                break;
            }
            diag.iterations += 1;
            let pre = Ilu0::new(&jac)?;
            let mut step = vec![T::zero(); n];
            let st = gmres(&jac, &pre, &g, &mut step, opts)?;
            diag.linear_iterations += st.iterations;
            let mut lambda = T::one();
            loop {
                for i in 0..n {
                    trial[i] = w[i] - lambda * step[i];
                }
                scheme.residual(delta, &trial, &mut theta, false, &mut gt, &mut dh_scratch);
                let rt = max_abs(&gt);
                if rt < res * (T::one() - lit::<T>(1e-4) * lambda) || lambda < lit(1e-3) {
                    break;
                }
                lambda *= lit(0.5);
            }
            w.copy_from_slice(&trial);
        }
        if !converged {
            return Err(Error::NoConvergence {
                solver: "subcritical Newton",
                iterations: diag.iterations,
                residual: diag.residual,
            });
        }
        let u: Vec<T> = w.iter().map(|&wi| delta * wi).collect();
        diag.discounted
            .push((to_f64(delta), to_f64(pairwise_sum(&u) / nf)));
        prev = last.take();
        last = Some((delta, u));
    }
    let (d2, u2) = last.expect("schedule is non-empty");
    let (d1, u1) = prev.expect("schedule has two entries");
    let mut h_bar = extrapolate(d1, &u1, d2, &u2);
    if h_bar < -tol * scale {
        return Err(Error::NegativeHbar(to_f64(h_bar)));
    }
    h_bar = h_bar.max(T::zero());
    // residual of |tau^T Dw + sigma^T p|^2 = h_bar with the final scheme
    let mut theta = vec![T::zero(); n * m];
    scheme.residual(d2, &w, &mut theta, true, &mut g, &mut dh);
    let mut worst = T::zero();
    for i in 0..n {
        // g_i = delta w_i - Hhat_i, so Hhat_i = delta w_i - g_i
        worst = worst.max((d2 * w[i] - g[i] - h_bar).abs());
    }
    diag.residual = to_f64(worst);
    let w0 = w[0];
    let corr: Vec<T> = w.iter().map(|&wi| wi - w0).collect();
    Ok(SubcriticalCellSolution {
        h_bar,
        h_zero: h_bar.sqrt(),
        corrector: GridFunction::new(grid.clone(), corr)?,
        tol,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{default_deltas, h_bar_subcritical_closed_1d};
    use crate::model::{catalog_model, Params};
    use std::f64::consts::TAU;

    #[test]
    fn constant_sigma() {
        let m = catalog_model::<f64>("const-sigma", &Params::new()).unwrap();
        let g = TorusGrid::uniform(1, 64).unwrap();
        let s = solve_cell_subcritical(&m, &g, &[0.0], &[2.0], &default_deltas(), 1e-3).unwrap();
        assert!((s.h_bar - 0.36).abs() < 1e-9, "{}", s.h_bar);
        assert!((s.h_zero - 0.6).abs() < 1e-8);
    }

    #[test]
    fn zero_momentum() {
        let m = catalog_model::<f64>("correlated-1d", &Params::new()).unwrap();
        let g = TorusGrid::uniform(1, 64).unwrap();
        let s = solve_cell_subcritical(&m, &g, &[0.0], &[0.0], &default_deltas(), 1e-3).unwrap();
        assert_eq!(s.h_bar, 0.0);
        assert!(s.corrector.values().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn uncorrelated_sine_approaches_max_formula() {
        let m = catalog_model::<f64>("sine-1d", &Params::new()).unwrap();
        let g = TorusGrid::uniform(1, 128).unwrap();
        let s = solve_cell_subcritical(&m, &g, &[0.0], &[1.0], &default_deltas(), 1e-3).unwrap();
        assert!((s.h_bar - 2.25).abs() / 2.25 < 2e-2, "{}", s.h_bar);
    }

    #[test]
    fn correlated_matches_quadrature() {
        let m = catalog_model::<f64>("correlated-1d", &Params::new()).unwrap();
        let exact = h_bar_subcritical_closed_1d(
            |y: f64| 1.0 + 0.5 * (TAU * y).sin(),
            |y: f64| 1.0 + 0.25 * (TAU * y).cos(),
            1.0,
            4096,
        )
        .unwrap();
        let g = TorusGrid::uniform(1, 128).unwrap();
        let s = solve_cell_subcritical(&m, &g, &[0.0], &[1.0], &default_deltas(), 1e-3).unwrap();
        assert!(
            (s.h_bar - exact).abs() / exact < 2e-2,
            "{} vs {exact}",
            s.h_bar
        );
    }
}
