//! Markov-chain discretization of second-order operators on the torus.
//!
//! The operator `tr(a D^2 f) + beta . Df` is approximated by a continuous-time
//! Markov chain on a [`TorusGrid`]. Axis moves use exponentially fitted rates,
//! `(A/h^2) B(-P)` forward and `(A/h^2) B(P)` backward with `B(z) = z/(e^z - 1)`
//! and a cell Péclet number `P` integrated along the edge, so the chain is an
//! M-matrix for every grid and reproduces reversible densities exactly in 1D.
//! Off-diagonal diffusion uses diagonal moves, which requires
//! `a_kk - sum_l |a_kl| h_k / h_l > 0`.

use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::model::{TorusGrid, VolatilityModel};
use crate::scalar::{lit, to_f64, Real};
use crate::stats::gauss_legendre_unit;

const QUAD_POINTS: usize = 3;

/// `z / (e^z - 1)`, continuous at 0.
#[inline]
pub fn bernoulli<T: Real>(z: T) -> T {
    if z.abs() < lit(1e-6) {
        T::one() - z * lit(0.5) + z * z / lit(12.0)
    } else {
        z / z.exp_m1()
    }
}

/// Generator matrix of a chain on a torus grid; rows sum to zero.
#[derive(Debug, Clone)]
pub struct Generator<T> {
    grid: TorusGrid,
    q: Csr<T>,
}

impl<T: Real> Generator<T> {
    /// Assembles the chain for `tr(a D^2) + beta . D`, where `coef(y, a, beta)`
    /// writes the `m x m` diffusion matrix and the drift at `y`.
    pub fn assemble(
        grid: &TorusGrid,
        mut coef: impl FnMut(&[T], &mut [T], &mut [T]),
    ) -> Result<Self> {
        let m = grid.dim();
        let len = grid.len();
        let h: Vec<T> = (0..m).map(|k| grid.spacing(k)).collect();
        let (qx, qw) = gauss_legendre_unit::<T>(QUAD_POINTS);

        let mut y = vec![T::zero(); m];
        let mut a = vec![T::zero(); m * m];
        let mut beta = vec![T::zero(); m];
        let mut a_nodes = vec![T::zero(); len * m * m];
        for i in 0..len {
            grid.node(i, &mut y);
            coef(&y, &mut a, &mut beta);
            a_nodes[i * m * m..(i + 1) * m * m].copy_from_slice(&a);
        }
        let reduced = |a: &[T], k: usize| -> T {
            let mut v = a[k * m + k];
            for l in 0..m {
                if l != k {
                    v -= a[k * m + l].abs() * h[k] / h[l];
                }
            }
            v
        };

        let mut trip: Vec<(usize, usize, T)> = Vec::with_capacity(len * (2 * m + 2 * m * m + 1));
        let mut out_rate = vec![T::zero(); len];
        let mut yq = vec![T::zero(); m];
        for i in 0..len {
            grid.node(i, &mut y);
            let ai = &a_nodes[i * m * m..(i + 1) * m * m];
            for k in 0..m {
                let j = grid.neighbor(i, k, 1);
                let aj = &a_nodes[j * m * m..(j + 1) * m * m];
                let (ri, rj) = (reduced(ai, k), reduced(aj, k));
                if !(ri > T::zero() && rj > T::zero()) {
                    return Err(Error::precondition(format!(
                        "diffusion is not diagonally dominant enough for this grid (axis {k}, reduced coefficient {})",
                        to_f64(ri.min(rj))
                    )));
                }
                // integral of beta_k / a_kk along the edge, minus log(a_j / a_i)
                let mut integral = T::zero();
                for (s, w) in qx.iter().zip(&qw) {
                    yq.copy_from_slice(&y);
                    yq[k] += *s * h[k];
                    coef(&yq, &mut a, &mut beta);
                    let rq = reduced(&a, k);
                    if !(rq > T::zero()) {
                        return Err(Error::precondition(
                            "diffusion degenerates inside a grid cell".to_string(),
                        ));
                    }
                    integral += *w * beta[k] / rq;
                }
                let peclet = integral * h[k] - (rj / ri).ln();
                let scale = (ri + rj) * lit(0.5) / (h[k] * h[k]);
                let fwd = scale * bernoulli(-peclet);
                let bwd = scale * bernoulli(peclet);
                trip.push((i, j, fwd));
                trip.push((j, i, bwd));
                out_rate[i] += fwd;
                out_rate[j] += bwd;
            }
            for k in 0..m {
                for l in (k + 1)..m {
                    let akl = ai[k * m + l];
                    if akl == T::zero() {
                        continue;
                    }
                    let w = akl.abs() / (h[k] * h[l]);
                    let sl: isize = if akl > T::zero() { 1 } else { -1 };
                    let up = grid.neighbor(grid.neighbor(i, k, 1), l, sl);
                    let dn = grid.neighbor(grid.neighbor(i, k, -1), l, -sl);
                    trip.push((i, up, w));
                    trip.push((i, dn, w));
                    out_rate[i] += w + w;
                }
            }
        }
        for (i, r) in out_rate.into_iter().enumerate() {
            trip.push((i, i, -r));
        }
        Ok(Self {
            grid: grid.clone(),
            q: Csr::from_triplets(len, trip),
        })
    }

    /// Generator of the fast process `dY = b dt + sqrt(2) tau dW`.
    pub fn fast_process(model: &VolatilityModel<T>, grid: &TorusGrid) -> Result<Self> {
        check_grid(model, grid)?;
        let mut s = model.scratch();
        Self::assemble(grid, |y, a, beta| {
            model.diffusion(y, &mut s, a);
            model.b(y, beta);
        })
    }

    /// Generator of `dY = (b + 2 tau sigma^T p) dt + sqrt(2) tau dW` at slow state `x`.
    pub fn tilted(model: &VolatilityModel<T>, grid: &TorusGrid, x: &[T], p: &[T]) -> Result<Self> {
        check_grid(model, grid)?;
        let mut s = model.scratch();
        let mut ts = vec![T::zero(); model.m()];
        let two = lit::<T>(2.0);
        Self::assemble(grid, |y, a, beta| {
            model.tau_sigma_t_p(x, y, p, &mut s, &mut ts);
            model.diffusion(y, &mut s, a);
            model.b(y, beta);
            for (bk, tk) in beta.iter_mut().zip(&ts) {
                *bk += two * *tk;
            }
        })
    }

    /// Doob transform by a positive vector `g`: rates `q_ij g_j / g_i`, with the
    /// diagonal reset so rows sum to zero.
    pub fn doob(&self, g: &[T]) -> Self {
        let n = self.q.n();
        let mut trip = Vec::with_capacity(self.q.nnz());
        for i in 0..n {
            let (cols, vals) = self.q.row(i);
            let mut out = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    let r = v * g[j] / g[i];
                    trip.push((i, j, r));
                    out += r;
                }
            }
            trip.push((i, i, -out));
        }
        Self {
            grid: self.grid.clone(),
            q: Csr::from_triplets(n, trip),
        }
    }

    pub fn matrix(&self) -> &Csr<T> {
        &self.q
    }
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
}

pub(crate) fn check_grid<T: Real>(model: &VolatilityModel<T>, grid: &TorusGrid) -> Result<()> {
    if grid.dim() != model.m() {
        return Err(Error::GridMismatch(format!(
            "grid has {} axes but the fast state has dimension {}",
            grid.dim(),
            model.m()
        )));
    }
    Ok(())
}
