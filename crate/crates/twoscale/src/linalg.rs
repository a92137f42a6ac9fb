//! Sparse matrices and a preconditioned Krylov solver.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, max_abs, Real};

/// Square sparse matrix in compressed sparse row format with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Assembles from triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            debug_assert!(i < n && j < n);
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.n, trip)
    }

    /// `alpha * I + beta * self + diag(d)` (with `d` optional).
    pub fn affine(&self, alpha: T, beta: T, d: Option<&[T]>) -> Self {
        let mut trip = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trip.push((i, j, beta * v));
            }
            let extra = alpha + d.map_or(T::zero(), |d| d[i]);
            trip.push((i, i, extra));
        }
        Self::from_triplets(self.n, trip)
    }

    /// Replaces row `i` by `scale * e_i`.
    pub fn pin_row(&self, i: usize, scale: T) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            if r == i {
                trip.push((i, i, scale));
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                trip.push((r, j, v));
            }
        }
        Self::from_triplets(self.n, trip)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| self.row(i).1.iter().fold(T::zero(), |a, &v| a + v.abs()))
            .fold(T::zero(), T::max)
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Incomplete LU factorization with zero fill-in.
#[derive(Debug, Clone)]
pub struct Ilu0<T> {
    lu: Csr<T>,
    diag_pos: Vec<usize>,
}

impl<T: Real> Ilu0<T> {
    pub fn new(a: &Csr<T>) -> Result<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[k] == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::NoConvergence {
                    solver: "ilu0",
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in start..end {
                pos[lu.indices[k]] = k;
            }
            for k in start..end {
                let j = lu.indices[k];
                if j >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[j]];
                if pivot == T::zero() {
                    return Err(Error::NoConvergence {
                        solver: "ilu0",
                        iterations: i,
                        residual: f64::NAN,
                    });
                }
                let factor = lu.values[k] / pivot;
                lu.values[k] = factor;
                for kk in (diag_pos[j] + 1)..lu.indptr[j + 1] {
                    let col = lu.indices[kk];
                    let p = pos[col];
                    if p != usize::MAX && p >= start && p < end {
                        let upd = factor * lu.values[kk];
                        lu.values[p] -= upd;
                    }
                }
            }
            for k in start..end {
                pos[lu.indices[k]] = usize::MAX;
            }
            if lu.values[diag_pos[i]] == T::zero() {
                return Err(Error::NoConvergence {
                    solver: "ilu0",
                    iterations: i,
                    residual: f64::NAN,
                });
            }
        }
        Ok(Self { lu, diag_pos })
    }

    /// Solves `L U x = b` in place.
    pub fn apply(&self, x: &mut [T]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut acc = x[i];
            for k in self.lu.indptr[i]..self.diag_pos[i] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in (self.diag_pos[i] + 1)..self.lu.indptr[i + 1] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc / self.lu.values[self.diag_pos[i]];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `|b - A x| / |b|`.
    pub relative_residual: f64,
}

/// Settings for [`gmres`].
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rtol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 40,
            max_iter: 2000,
            rtol: 1e-12,
        }
    }
}

fn nrm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
}

/// Restarted GMRES with right ILU(0) preconditioning. `x` holds the initial
/// guess on entry and the solution on exit.
pub fn gmres<T: Real>(
    a: &Csr<T>,
    pre: &Ilu0<T>,
    b: &[T],
    x: &mut [T],
    opts: GmresOptions,
) -> Result<SolveStats> {
    let n = a.n;
    let bnorm = nrm(b);
    if bnorm == T::zero() {
        x.fill(T::zero());
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let rtol: T = lit(opts.rtol);
    let inner_tol = rtol * lit(0.25);
    let mm = opts.restart.max(1);
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut v: Vec<Vec<T>> = vec![vec![T::zero(); n]; mm + 1];
    let mut hmat = vec![vec![T::zero(); mm]; mm + 1];
    let (mut cs, mut sn) = (vec![T::zero(); mm], vec![T::zero(); mm]);
    let mut g = vec![T::zero(); mm + 1];
    let mut total = 0;
    let mut rel;
    let a_norm = a.norm_inf();
    let n_sqrt: T = from_usize::<T>(n).sqrt();

    loop {
        a.matvec(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = nrm(&r);
        rel = beta / bnorm;
        // residuals below the rounding level of the matvec cannot be resolved
        let floor = lit::<T>(16.0) * T::epsilon() * a_norm * n_sqrt * max_abs(x) / bnorm;
        if rel <= rtol.max(floor) {
            break;
        }
        if total >= opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "gmres",
                iterations: total,
                residual: rel.to_f64().unwrap_or(f64::NAN),
            });
        }
        for i in 0..n {
            v[0][i] = r[i] / beta;
        }
        g.fill(T::zero());
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..mm {
            z.copy_from_slice(&v[k]);
            pre.apply(&mut z);
            a.matvec(&z, &mut w);
            for j in 0..=k {
                let hj = w
                    .iter()
                    .zip(&v[j])
                    .fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                hmat[j][k] = hj;
                for i in 0..n {
                    w[i] -= hj * v[j][i];
                }
            }
            // one reorthogonalization pass keeps the basis clean for stiff systems
            for j in 0..=k {
                let hj = w
                    .iter()
                    .zip(&v[j])
                    .fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                hmat[j][k] += hj;
                for i in 0..n {
                    w[i] -= hj * v[j][i];
                }
            }
            let hn = nrm(&w);
            hmat[k + 1][k] = hn;
            if hn > T::zero() {
                for i in 0..n {
                    v[k + 1][i] = w[i] / hn;
                }
            }
            for j in 0..k {
                let t = cs[j] * hmat[j][k] + sn[j] * hmat[j + 1][k];
                hmat[j + 1][k] = -sn[j] * hmat[j][k] + cs[j] * hmat[j + 1][k];
                hmat[j][k] = t;
            }
            let den = (hmat[k][k] * hmat[k][k] + hmat[k + 1][k] * hmat[k + 1][k]).sqrt();
            if den == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = hmat[k][k] / den;
                sn[k] = hmat[k + 1][k] / den;
            }
            hmat[k][k] = cs[k] * hmat[k][k] + sn[k] * hmat[k + 1][k];
            hmat[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= inner_tol || hn == T::zero() || total >= opts.max_iter {
                break;
            }
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= hmat[i][j] * y[j];
            }
            y[i] = acc / hmat[i][i];
        }
        let mut upd = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            for i in 0..n {
                upd[i] += yj * v[j][i];
            }
        }
        pre.apply(&mut upd);
        for i in 0..n {
            x[i] += upd[i];
        }
    }
    Ok(SolveStats {
        iterations: total,
        relative_residual: rel.to_f64().unwrap_or(f64::NAN),
    })
}

/// Factor-and-solve convenience wrapper.
pub fn solve<T: Real>(a: &Csr<T>, b: &[T], x: &mut [T], rtol: f64) -> Result<SolveStats> {
    let pre = Ilu0::new(a)?;
    gmres(
        a,
        &pre,
        b,
        x,
        GmresOptions {
            rtol,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_laplacian(n: usize, shift: f64) -> Csr<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            t.push((i, (i + 1) % n, -1.0 - 0.3));
            t.push((i, (i + n - 1) % n, -1.0 + 0.3));
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.transpose().get(0, 1), 4.0);
    }

    #[test]
    fn ilu_of_tridiagonal_is_exact() {
        let mut t = Vec::new();
        let n = 20;
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -2.0));
            }
        }
        let a = Csr::from_triplets(n, t);
        let ilu = Ilu0::new(&a).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        ilu.apply(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_periodic_system() {
        let n = 300;
        let a = periodic_laplacian(n, 1e-3);
        let xs: Vec<f64> = (0..n)
            .map(|i| (0.1 * i as f64).cos() + 0.01 * i as f64)
            .collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        let mut x = vec![0.0; n];
        let st = solve(&a, &b, &mut x, 1e-13).unwrap();
        assert!(st.relative_residual <= 1e-13);
        let err = x
            .iter()
            .zip(&xs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn pinned_row_and_affine() {
        let a = periodic_laplacian(5, 0.0);
        let p = a.pin_row(0, 1.0);
        assert_eq!(p.row(0).0, &[0]);
        assert_eq!(p.get(0, 0), 1.0);
        let s = a.affine(2.0, -1.0, Some(&[1.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(0, 1), 1.3);
    }
}
