use super::{check_deltas, check_resolution, extrapolate, is_zero, CellDiagnostics};
use crate::error::{Error, Result};
use crate::generator::{check_grid, Generator};
use crate::invariant::{stationary_distribution, InvariantMeasure};
use crate::linalg::{gmres, Csr, GmresOptions, Ilu0};
use crate::model::{GridFunction, TorusGrid, VolatilityModel};
use crate::scalar::{from_usize, lit, max_abs, to_f64, Real};
use crate::stats::pairwise_sum;

/// Which route produced a critical cell solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalMethod {
    /// Principal eigenvalue of the tilted generator plus potential.
    Eigenvalue,
    /// Vanishing-discount limit of the discounted Bellman equation.
    Discount,
}

/// Solution of the critical cell problem at one `(x, p)`.
#[derive(Debug, Clone)]
pub struct CriticalCellSolution<T> {
    pub h_bar: T,
    /// `w = log g - log g(0)`.
    pub corrector: GridFunction<T>,
    /// Positive eigenfunction `g`, normalized to `max g = 1`.
    pub eigenfunction: GridFunction<T>,
    pub method: CriticalMethod,
    pub tol: T,
    pub diagnostics: CellDiagnostics,
}

/// Potential `V_i = |sigma(x, y_i)^T p|^2` on the grid nodes.
fn potential<T: Real>(model: &VolatilityModel<T>, grid: &TorusGrid, x: &[T], p: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); grid.dim()];
    let mut s = model.scratch();
    (0..grid.len())
        .map(|i| {
            grid.node(i, &mut y);
            model.sigma_t_p_sq(x, &y, p, &mut s)
        })
        .collect()
}

fn check_inputs<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
) -> Result<()> {
    check_grid(model, grid)?;
    check_resolution(grid, 32)?;
    if x.len() != model.n() || p.len() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "critical cell problem",
            detail: format!("x and p must have length {}", model.n()),
        });
    }
    Ok(())
}

fn trivial<T: Real>(
    grid: &TorusGrid,
    method: CriticalMethod,
    value: T,
    tol: T,
) -> Result<CriticalCellSolution<T>> {
    Ok(CriticalCellSolution {
        h_bar: value,
        corrector: GridFunction::new(grid.clone(), vec![T::zero(); grid.len()])?,
        eigenfunction: GridFunction::new(grid.clone(), vec![T::one(); grid.len()])?,
        method,
        tol,
        diagnostics: CellDiagnostics::default(),
    })
}

fn finish<T: Real>(
    grid: &TorusGrid,
    g: Vec<T>,
    h_bar: T,
    method: CriticalMethod,
    tol: T,
    diagnostics: CellDiagnostics,
) -> Result<CriticalCellSolution<T>> {
    let lowest = g.iter().copied().fold(T::infinity(), T::min);
    if !(lowest > T::zero()) {
        return Err(Error::NonPositiveEigenfunction {
            min: to_f64(lowest),
        });
    }
    let l0 = g[0].ln();
    let w: Vec<T> = g.iter().map(|&v| v.ln() - l0).collect();
    Ok(CriticalCellSolution {
        h_bar,
        corrector: GridFunction::new(grid.clone(), w)?,
        eigenfunction: GridFunction::new(grid.clone(), g)?,
        method,
        tol,
        diagnostics,
    })
}

/// Principal eigenvalue of `L^{x,p} + V` by shifted inverse iteration.
///
/// The generator is the tilted fast generator with drift `b + 2 tau sigma^T p`
/// and `V = |sigma^T p|^2`. Iteration stops when the Collatz–Wielandt bounds
/// `min (Ag)_i/g_i <= lambda <= max (Ag)_i/g_i` agree to `tol * max(1, max V)`.
pub fn solve_cell_critical_eigen<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
    tol: T,
) -> Result<CriticalCellSolution<T>> {
    check_inputs(model, grid, x, p)?;
    if is_zero(p) {
        return trivial(grid, CriticalMethod::Eigenvalue, T::zero(), tol);
    }
    let v = potential(model, grid, x, p);
    let vmax = v.iter().copied().fold(T::neg_infinity(), T::max);
    let scale = vmax.max(T::one());
    let gen = Generator::tilted(model, grid, x, p)?;
    let n = grid.len();
    let a = gen.matrix().affine(T::zero(), T::one(), Some(&v));

    let anorm = a.norm_inf();
    let shift = vmax + T::one() + vmax * lit(0.1);
    let m = a.affine(shift, -T::one(), None);
    let pre = Ilu0::new(&m)?;
    let opts = GmresOptions {
        rtol: (T::eps_f64() * 1e4).max(1e-12),
        ..Default::default()
    };

    let mut g = vec![T::one(); n];
    let mut ag = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut diag = CellDiagnostics::default();
    let max_iter = 500;
    let target = tol * scale;
    for it in 0..=max_iter {
        a.matvec(&g, &mut ag);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let q = ag[i] / g[i];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        diag.iterations = it;
        diag.residual = to_f64(hi - lo);
        let gmin = g.iter().copied().fold(T::infinity(), T::min);
        let floor = lit::<T>(16.0) * T::epsilon() * anorm / gmin;
        if hi - lo <= target.max(floor) {
            let lambda = (lo + hi) * lit(0.5);
            return finish(grid, g, lambda, CriticalMethod::Eigenvalue, tol, diag);
        }
        if it == max_iter {
            break;
        }
        let lam = (lo + hi) * lit(0.5);
        for i in 0..n {
            next[i] = g[i] / (shift - lam);
        }
        let st = gmres(&m, &pre, &g, &mut next, opts)?;
        diag.linear_iterations += st.iterations;
        let peak = max_abs(&next);
        for i in 0..n {
            g[i] = next[i] / peak;
        }
        if g.iter().any(|&gi| !(gi > T::zero())) {
            let lowest = g.iter().copied().fold(T::infinity(), T::min);
            return Err(Error::NonPositiveEigenfunction {
                min: to_f64(lowest),
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "critical eigenvalue",
        iterations: max_iter,
        residual: diag.residual,
    })
}

/// Residual `delta w_i - sum_j q_ij (e^{w_j - w_i} - 1) - V_i`.
fn bellman_residual<T: Real>(q: &Csr<T>, delta: T, w: &[T], v: &[T], out: &mut [T]) {
    for i in 0..q.n() {
        let (cols, vals) = q.row(i);
        let mut acc = T::zero();
        for (&j, &qij) in cols.iter().zip(vals) {
            if j != i {
                acc += qij * (w[j] - w[i]).exp_m1();
            }
        }
        out[i] = delta * w[i] - acc - v[i];
    }
}

/// Critical `H` as the vanishing-discount limit of
/// `delta w - sum_j q_ij (e^{w_j - w_i} - 1) - V = 0`, the discrete form of the
/// discounted cell problem for `g = e^w`.
///
/// Each discounted problem is solved by policy iteration on its control form
/// `delta w_i = max_rho sum_j q_ij [rho_ij (w_j - w_i) - (rho log rho - rho + 1)] + V_i`.
/// The returned value extrapolates `delta w_delta` linearly to `delta = 0`
/// from the last two discounts.
pub fn solve_cell_critical_discount<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
    deltas: &[T],
    tol: T,
) -> Result<CriticalCellSolution<T>> {
    check_inputs(model, grid, x, p)?;
    check_deltas(deltas)?;
    if is_zero(p) {
        return trivial(grid, CriticalMethod::Discount, T::zero(), tol);
    }
    let v = potential(model, grid, x, p);
    let vmax = v.iter().copied().fold(T::neg_infinity(), T::max);
    let vmin = v.iter().copied().fold(T::infinity(), T::min);
    let scale = vmax.max(T::one());
    let gen = Generator::tilted(model, grid, x, p)?;
    let q = gen.matrix();
    let n = grid.len();
    let nf: T = from_usize(n);
    let qnorm = q.norm_inf();

    let inner_tol = (lit::<T>(1e-10) * scale).max(T::epsilon() * lit(1e4) * scale);
    let opts = GmresOptions {
        rtol: (T::eps_f64() * 1e4).max(1e-12),
        ..Default::default()
    };
    let mut diag = CellDiagnostics::default();
    let mut w = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut prev: Option<(T, Vec<T>)> = None;
    let mut last: Option<(T, Vec<T>)> = None;

    for &delta in deltas {
        if let Some((_, up)) = &last {
            // keep the oscillating part, move the mean to the new discount
            let mean_u = pairwise_sum(up) / nf;
            let mean_w = pairwise_sum(&w) / nf;
            for wi in w.iter_mut() {
                *wi = *wi - mean_w + mean_u / delta;
            }
        } else {
            for (wi, &vi) in w.iter_mut().zip(&v) {
                *wi = vi / delta;
            }
        }
        let max_policy = 200;
        let mut lin_floor = T::zero();
        let mut converged = false;
        for _ in 0..max_policy {
            bellman_residual(q, delta, &w, &v, &mut r);
            let res = max_abs(&r);
            diag.residual = to_f64(res);
            let floor = (lit::<T>(16.0) * T::epsilon() * qnorm * max_abs(&w)).max(lin_floor);
            if res <= inner_tol.max(floor) {
                converged = true;
                break;
            }
            diag.iterations += 1;
            let mut trip = Vec::with_capacity(q.nnz());
            let mut rhs = v.clone();
            for i in 0..n {
                let (cols, vals) = q.row(i);
                let mut out = T::zero();
                for (&j, &qij) in cols.iter().zip(vals) {
                    if j == i {
                        continue;
                    }
                    let d = w[j] - w[i];
                    let rho = d.exp();
                    let rate = qij * rho;
                    trip.push((i, j, -rate));
                    out += rate;
                    rhs[i] -= qij * (rho * d - rho + T::one());
                }
                trip.push((i, i, delta + out));
            }
            let mat = Csr::from_triplets(n, trip);
            let pre = Ilu0::new(&mat)?;
            let st = gmres(&mat, &pre, &rhs, &mut w, opts)?;
            diag.linear_iterations += st.iterations;
            // the next residual cannot drop below what this linear solve resolved
            let rhs_norm = rhs.iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
            let sqrt_n = nf.sqrt();
            lin_floor = lit::<T>(2.0)
                * (lit::<T>(opts.rtol) * rhs_norm)
                    .max(lit::<T>(16.0) * T::epsilon() * mat.norm_inf() * sqrt_n * max_abs(&w));
        }
        if !converged {
            return Err(Error::NoConvergence {
                solver: "critical discount policy iteration",
                iterations: diag.iterations,
                residual: diag.residual,
            });
        }
        let u: Vec<T> = w.iter().map(|&wi| delta * wi).collect();
        let umax = u.iter().copied().fold(T::neg_infinity(), T::max);
        let umin = u.iter().copied().fold(T::infinity(), T::min);
        if umax > vmax + tol * scale || umin < vmin - tol * scale {
            let worst = if umax > vmax + tol * scale {
                umax
            } else {
                umin
            };
            return Err(Error::BoundViolation {
                value: to_f64(worst),
                bound: to_f64(vmax),
            });
        }
        diag.discounted
            .push((to_f64(delta), to_f64(pairwise_sum(&u) / nf)));
        prev = last.take();
        last = Some((delta, u));
    }
    let (d2, u2) = last.expect("schedule is non-empty");
    let (d1, u1) = prev.expect("schedule has two entries");
    let h_bar = extrapolate(d1, &u1, d2, &u2);
    let peak = w.iter().copied().fold(T::neg_infinity(), T::max);
    let g: Vec<T> = w.iter().map(|&wi| (wi - peak).exp()).collect();
    finish(grid, g, h_bar, CriticalMethod::Discount, tol, diag)
}

/// Invariant measure of the optimally controlled fast process together with
/// the representation `H = int (|sigma^T p|^2 - |tau^T Dw|^2) dmu`.
#[derive(Debug, Clone)]
pub struct CriticalMeasure<T> {
    pub measure: InvariantMeasure<T>,
    /// `int (V - |tau^T Dw|^2) dmu` with centered differences for `Dw`.
    pub identity: T,
    /// Exact discrete analogue, `sum_i mu_i (V_i - sum_j q_ij c(g_j / g_i))`
    /// with `c(r) = r log r - r + 1`.
    pub discrete_identity: T,
}

/// Stationary law of the chain with rates `q_ij g_j / g_i`, the discrete
/// counterpart of the fast process with feedback drift `b + 2 tau sigma^T p + 2 tau tau^T Dw`.
pub fn critical_invariant_measure<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    solution: &CriticalCellSolution<T>,
    x: &[T],
    p: &[T],
) -> Result<CriticalMeasure<T>> {
    check_inputs(model, grid, x, p)?;
    if solution.corrector.grid() != grid {
        return Err(Error::GridMismatch(
            "solution was computed on a different grid".into(),
        ));
    }
    let g = solution.eigenfunction.values();
    let gen = Generator::tilted(model, grid, x, p)?;
    let doob = gen.doob(g);
    let tol = lit::<T>(1e-8).max(T::epsilon() * lit(1e4));
    let measure = stationary_distribution(&doob, tol)?;
    let weights = measure.weights();
    let v = potential(model, grid, x, p);

    let q = gen.matrix();
    let w = solution.corrector.values();
    let m = grid.dim();
    let mut ys = vec![T::zero(); m];
    let mut s = model.scratch();
    let mut a = vec![T::zero(); m * m];
    let mut dw = vec![T::zero(); m];
    let mut cont = Vec::with_capacity(grid.len());
    let mut disc = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        grid.node(i, &mut ys);
        model.diffusion(&ys, &mut s, &mut a);
        for k in 0..m {
            let h: T = grid.spacing(k);
            dw[k] = (w[grid.neighbor(i, k, 1)] - w[grid.neighbor(i, k, -1)]) / (h + h);
        }
        let mut quad = T::zero();
        for k in 0..m {
            for l in 0..m {
                quad += dw[k] * a[k * m + l] * dw[l];
            }
        }
        cont.push((v[i] - quad) * weights[i]);
        let (cols, vals) = q.row(i);
        let mut cost = T::zero();
        for (&j, &qij) in cols.iter().zip(vals) {
            if j != i {
                let d = w[j] - w[i];
                let rho = d.exp();
                cost += qij * (rho * d - rho + T::one());
            }
        }
        disc.push((v[i] - cost) * weights[i]);
    }
    Ok(CriticalMeasure {
        measure,
        identity: pairwise_sum(&cont),
        discrete_identity: pairwise_sum(&disc),
    })
}
