//! Invariant measure of the fast process and the supercritical effective Hamiltonian.

use crate::error::{Error, Result};
use crate::generator::{check_grid, Generator};
use crate::linalg::{self, Csr};
use crate::model::{GridFunction, TorusGrid, VolatilityModel};
use crate::scalar::{max_abs, to_f64, Real};
use crate::stats::pairwise_sum;

/// Stationary density on the torus, normalized to unit mass.
#[derive(Debug, Clone)]
pub struct InvariantMeasure<T> {
    pub density: GridFunction<T>,
    /// `max |Q^T mu| / (|Q^T|_inf |mu|_inf)` for the discrete generator `Q`.
    pub residual_norm: T,
    /// `sum_i mu_i prod h_k` after normalization.
    pub mass: T,
}

impl<T: Real> InvariantMeasure<T> {
    pub fn grid(&self) -> &TorusGrid {
        self.density.grid()
    }
    /// Quadrature weights `mu_i prod h_k`.
    pub fn weights(&self) -> Vec<T> {
        let v = self.grid().cell_volume::<T>();
        self.density.values().iter().map(|&d| d * v).collect()
    }
}

/// Stationary distribution of a generator: solves `Q^T mu = 0` with `mu_0 = 1`
/// pinned, then normalizes to unit mass.
pub fn stationary_distribution<T: Real>(gen: &Generator<T>, tol: T) -> Result<InvariantMeasure<T>> {
    let qt = gen.matrix().transpose();
    let n = qt.n();
    let scale = qt.get(0, 0).abs().max(T::one());
    let pinned: Csr<T> = qt.pin_row(0, scale);
    let mut rhs = vec![T::zero(); n];
    rhs[0] = scale;
    let mut mu = vec![T::one(); n];
    let rtol = (to_f64(tol) * 1e-3)
        .clamp(1e-12, 1e-8)
        .max(T::eps_f64() * 64.0);
    linalg::solve(&pinned, &rhs, &mut mu, rtol)?;

    let peak = max_abs(&mu);
    let lowest = mu.iter().copied().fold(T::infinity(), T::min);
    if lowest < -tol * peak {
        return Err(Error::NegativeDensity {
            min: to_f64(lowest / peak),
        });
    }
    let vol = gen.grid().cell_volume::<T>();
    let total = pairwise_sum(&mu) * vol;
    for v in mu.iter_mut() {
        *v /= total;
    }
    let mut res = vec![T::zero(); n];
    qt.matvec(&mu, &mut res);
    let residual = max_abs(&res) / (qt.norm_inf() * max_abs(&mu));
    let mass = pairwise_sum(&mu) * vol;
    Ok(InvariantMeasure {
        density: GridFunction::new(gen.grid().clone(), mu)?,
        residual_norm: residual,
        mass,
    })
}

/// Invariant measure of `dY = b dt + sqrt(2) tau dW` on the torus.
pub fn solve_invariant_measure<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    tol: T,
) -> Result<InvariantMeasure<T>> {
    if grid.dims().iter().any(|&d| d < 16) {
        return Err(Error::precondition(
            "invariant measure needs at least 16 nodes per axis",
        ));
    }
    let gen = Generator::fast_process(model, grid)?;
    let mu = stationary_distribution(&gen, tol)?;
    if mu.residual_norm > tol {
        return Err(Error::NoConvergence {
            solver: "stationary Fokker-Planck",
            iterations: 0,
            residual: to_f64(mu.residual_norm),
        });
    }
    Ok(mu)
}

/// `sum_i |sigma(x, y_i)^T p|^2 mu_i prod h_k`.
pub fn h_bar_supercritical<T: Real>(
    model: &VolatilityModel<T>,
    mu: &InvariantMeasure<T>,
    x: &[T],
    p: &[T],
) -> Result<T> {
    check_grid(model, mu.grid()).map_err(|_| {
        Error::GridMismatch(format!(
            "measure lives on a {}-dimensional torus, model has m = {}",
            mu.grid().dim(),
            model.m()
        ))
    })?;
    if x.len() != model.n() || p.len() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "h_bar_supercritical",
            detail: format!("x and p must have length {}", model.n()),
        });
    }
    let grid = mu.grid();
    let mut y = vec![T::zero(); grid.dim()];
    let mut s = model.scratch();
    let terms: Vec<T> = (0..grid.len())
        .map(|i| {
            grid.node(i, &mut y);
            model.sigma_t_p_sq(x, &y, p, &mut s) * mu.density.values()[i]
        })
        .collect();
    Ok(pairwise_sum(&terms) * grid.cell_volume::<T>())
}

/// `M(x) = sum_i sigma sigma^T(x, y_i) mu_i prod h_k`, so that `H(x,p) = p^T M p`.
pub fn averaged_diffusion<T: Real>(
    model: &VolatilityModel<T>,
    mu: &InvariantMeasure<T>,
    x: &[T],
) -> Vec<T> {
    let (n, r) = (model.n(), model.r());
    let grid = mu.grid();
    let mut y = vec![T::zero(); grid.dim()];
    let mut s = model.scratch();
    let w = mu.weights();
    let mut out = vec![T::zero(); n * n];
    for i in 0..grid.len() {
        grid.node(i, &mut y);
        model.sigma(x, &y, &mut s.sigma);
        for a in 0..n {
            for b in 0..n {
                let mut acc = T::zero();
                for k in 0..r {
                    acc += s.sigma[a * r + k] * s.sigma[b * r + k];
                }
                out[a * n + b] += acc * w[i];
            }
        }
    }
    out
}

/// Range `(min, max)` of `|sigma(x, y)^T p|^2` over the nodes of `grid`.
pub fn potential_range<T: Real>(
    model: &VolatilityModel<T>,
    grid: &TorusGrid,
    x: &[T],
    p: &[T],
) -> (T, T) {
    let mut y = vec![T::zero(); grid.dim()];
    let mut s = model.scratch();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..grid.len() {
        grid.node(i, &mut y);
        let v = model.sigma_t_p_sq(x, &y, p, &mut s);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
