//! Effective Hamiltonians: the regime dispatcher and simple closed-form evaluators.

use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use nalgebra::DMatrix;

use crate::cell::{
    default_deltas, h_bar_subcritical_closed_1d, h_bar_uncorrelated_max, solve_cell_critical_eigen,
    solve_cell_subcritical,
};
use crate::error::{Error, Result};
use crate::invariant::{h_bar_supercritical, solve_invariant_measure, InvariantMeasure};
use crate::model::{Regime, RegimeKind, TorusGrid, VolatilityModel};
use crate::scalar::{from_usize, lit, norm, to_f64, Real};

/// A function `H(x, p)` on `R^n x R^n`, convex in `p` with `H(x, 0) = 0`.
pub trait Hamiltonian<T: Real>: Send + Sync {
    /// Dimension `n` of `x` and `p`.
    fn dim(&self) -> usize;
    fn eval(&self, x: &[T], p: &[T]) -> Result<T>;
    /// Whether `H` does not depend on `x`.
    fn x_independent(&self) -> bool;
    /// Measured constants `(nu, c)` with `nu |p|^2 <= H(x, p) <= c |p|^2`.
    fn growth(&self) -> (T, T);
    /// Growth constants valid at the given `x`.
    fn growth_at(&self, _x: &[T]) -> (T, T) {
        self.growth()
    }
}

/// `H(p) = p^T M p` for a fixed symmetric positive semidefinite `M`.
#[derive(Debug, Clone)]
pub struct QuadraticHamiltonian<T> {
    n: usize,
    m: Vec<T>,
    growth: (T, T),
}

impl<T: Real> QuadraticHamiltonian<T> {
    /// `M` is row-major `n x n` and must be symmetric.
    pub fn new(n: usize, m: Vec<T>) -> Result<Self> {
        if n == 0 || m.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "quadratic Hamiltonian",
                detail: format!("matrix has {} entries for n = {n}", m.len()),
            });
        }
        for a in 0..n {
            for b in 0..a {
                if (m[a * n + b] - m[b * n + a]).abs()
                    > T::epsilon() * lit(16.0) * (m[a * n + b].abs() + T::one())
                {
                    return Err(Error::BadParameter {
                        name: "M".into(),
                        reason: "matrix must be symmetric".into(),
                    });
                }
            }
        }
        let (lo, hi) = sym_eig_range(n, &m);
        if lo < -T::epsilon() * lit(64.0) * hi.abs().max(T::one()) {
            return Err(Error::BadParameter {
                name: "M".into(),
                reason: format!("matrix has negative eigenvalue {lo}"),
            });
        }
        Ok(QuadraticHamiltonian {
            n,
            m,
            growth: (lo.max(T::zero()), hi),
        })
    }

    /// `H(p) = s^2 p^2` in one dimension.
    pub fn scalar(s2: T) -> Result<Self> {
        Self::new(1, vec![s2])
    }

    pub fn matrix(&self) -> &[T] {
        &self.m
    }
}

impl<T: Real> Hamiltonian<T> for QuadraticHamiltonian<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[T], p: &[T]) -> Result<T> {
        check_len(self.n, x, p)?;
        Ok(quad_form(self.n, &self.m, p))
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn growth(&self) -> (T, T) {
        self.growth
    }
}

/// One-dimensional Hamiltonian tabulated on `[x_lo, x_hi] x [-p_max, p_max]`.
///
/// The ratio `H(x, p) / p^2` is interpolated bilinearly, so quadratic
/// Hamiltonians are reproduced exactly. Outside the table the nearest edge
/// ratio is held in both variables.
#[derive(Debug, Clone)]
pub struct TabulatedHamiltonian<T> {
    x_lo: T,
    x_hi: T,
    nx: usize,
    p_max: T,
    half: usize,
    ratio: Vec<T>,
    growth: (T, T),
}

impl<T: Real> TabulatedHamiltonian<T> {
    /// Samples an `x`-independent `h` at `2 * half + 1` evenly spaced momenta.
    pub fn new(h: &dyn Hamiltonian<T>, p_max: T, half: usize) -> Result<Self> {
        if !h.x_independent() {
            return Err(Error::NotXIndependent);
        }
        Self::build(h, T::zero(), T::zero(), 1, p_max, half)
    }

    /// Samples `h` on `nx` evenly spaced positions in `[x_lo, x_hi]` and
    /// `2 * half + 1` momenta. Table entries are computed in parallel.
    pub fn with_x_range(
        h: &dyn Hamiltonian<T>,
        x_lo: T,
        x_hi: T,
        nx: usize,
        p_max: T,
        half: usize,
    ) -> Result<Self> {
        if nx < 2 || !(x_hi > x_lo) {
            return Err(Error::precondition(
                "x range needs x_hi > x_lo and at least two nodes",
            ));
        }
        Self::build(h, x_lo, x_hi, nx, p_max, half)
    }

    fn build(
        h: &dyn Hamiltonian<T>,
        x_lo: T,
        x_hi: T,
        nx: usize,
        p_max: T,
        half: usize,
    ) -> Result<Self> {
        use rayon::prelude::*;
        if h.dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "tabulated Hamiltonian",
                detail: "only one-dimensional Hamiltonians can be tabulated".into(),
            });
        }
        if !(p_max > T::zero()) || half < 2 {
            return Err(Error::precondition(
                "tabulation needs p_max > 0 and at least two nodes per side",
            ));
        }
        let np = 2 * half + 1;
        let dp = p_max / from_usize(half);
        let dx = if nx > 1 {
            (x_hi - x_lo) / from_usize(nx - 1)
        } else {
            T::zero()
        };
        let cells: Vec<Result<T>> = (0..nx * np)
            .into_par_iter()
            .map(|c| {
                let (i, k) = (c / np, c % np);
                if k == half {
                    return Ok(T::zero());
                }
                let x = x_lo + dx * from_usize(i);
                let p = dp * (from_usize::<T>(k) - from_usize::<T>(half));
                Ok(h.eval(&[x], &[p])? / (p * p))
            })
            .collect();
        let mut ratio = cells.into_iter().collect::<Result<Vec<T>>>()?;
        for i in 0..nx {
            // p = 0 takes the average of its neighbours' ratios
            let row = &mut ratio[i * np..(i + 1) * np];
            row[half] = (row[half - 1] + row[half + 1]) * lit(0.5);
        }
        Ok(TabulatedHamiltonian {
            x_lo,
            x_hi,
            nx,
            p_max,
            half,
            ratio,
            growth: h.growth(),
        })
    }

    /// Fractional index of `v` on `[lo, lo + step * (count - 1)]`, clamped.
    fn locate(v: T, lo: T, step: T, count: usize) -> (usize, T) {
        if count == 1 {
            return (0, T::zero());
        }
        let s = ((v - lo) / step).max(T::zero());
        let last = count - 1;
        let k = s.floor().to_usize().unwrap_or(last).min(last);
        if k == last {
            (last - 1, T::one())
        } else {
            (k, s - from_usize(k))
        }
    }

    fn row(&self, i: usize, k: usize, fp: T) -> T {
        let np = 2 * self.half + 1;
        self.ratio[i * np + k] * (T::one() - fp) + self.ratio[i * np + k + 1] * fp
    }

    /// Bilinear in `p`, cubic Catmull–Rom in `x` (linear on the end cells).
    fn ratio_at(&self, x: T, p: T) -> T {
        let np = 2 * self.half + 1;
        let dp = self.p_max / from_usize(self.half);
        let (k, fp) = Self::locate(p, -self.p_max, dp, np);
        if self.nx == 1 {
            return self.row(0, k, fp);
        }
        let dx = (self.x_hi - self.x_lo) / from_usize(self.nx - 1);
        let (i, f) = Self::locate(x, self.x_lo, dx, self.nx);
        let r1 = self.row(i, k, fp);
        let r2 = self.row(i + 1, k, fp);
        if i == 0 || i + 2 >= self.nx {
            return r1 * (T::one() - f) + r2 * f;
        }
        let r0 = self.row(i - 1, k, fp);
        let r3 = self.row(i + 2, k, fp);
        let half: T = lit(0.5);
        let f2 = f * f;
        let f3 = f2 * f;
        let two: T = lit(2.0);
        let three: T = lit(3.0);
        let four: T = lit(4.0);
        let five: T = lit(5.0);
        half * (two * r1
            + (r2 - r0) * f
            + (two * r0 - five * r1 + four * r2 - r3) * f2
            + (three * (r1 - r2) + r3 - r0) * f3)
    }

    /// Range of the tabulated ratio at `x` (all momenta).
    fn ratio_range(&self, x: T) -> (T, T) {
        let np = 2 * self.half + 1;
        let dp = self.p_max / from_usize(self.half);
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for k in 0..np {
            let v = self.ratio_at(x, -self.p_max + dp * from_usize(k));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

impl<T: Real> Hamiltonian<T> for TabulatedHamiltonian<T> {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[T], p: &[T]) -> Result<T> {
        check_len(1, x, p)?;
        Ok(self.ratio_at(x[0], p[0]) * p[0] * p[0])
    }
    fn x_independent(&self) -> bool {
        self.nx == 1
    }
    fn growth(&self) -> (T, T) {
        self.growth
    }
    fn growth_at(&self, x: &[T]) -> (T, T) {
        let (lo, hi) = self.ratio_range(x[0]);
        (lo.max(T::zero()), hi)
    }
}

/// Route that produced a value of the effective Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HamiltonianMethod {
    /// `p = 0`.
    Zero,
    /// `sigma` independent of `y`: every regime gives `|sigma^T p|^2`.
    Frozen,
    /// Quadrature against the invariant measure of the fast process.
    Averaged,
    /// Principal eigenvalue of the tilted generator.
    Eigenvalue,
    /// `max_y |sigma^T p|^2` for uncorrelated subcritical models.
    MaxFormula,
    /// One-dimensional subcritical quadrature formula.
    ClosedForm1d,
    /// Subcritical cell problem on the grid.
    CellSolver,
}

impl HamiltonianMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HamiltonianMethod::Zero => "zero",
            HamiltonianMethod::Frozen => "frozen",
            HamiltonianMethod::Averaged => "averaged",
            HamiltonianMethod::Eigenvalue => "eigenvalue",
            HamiltonianMethod::MaxFormula => "max-formula",
            HamiltonianMethod::ClosedForm1d => "closed-form-1d",
            HamiltonianMethod::CellSolver => "cell-solver",
        }
    }
}

impl fmt::Display for HamiltonianMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value of `H(x, p)` with the route and the solver residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue<T> {
    pub value: T,
    pub method: HamiltonianMethod,
    pub residual: f64,
}

/// Solver settings for [`EffectiveHamiltonian`].
#[derive(Debug, Clone)]
pub struct HamiltonianOptions<T> {
    /// Nodes per axis of the fast torus grid.
    pub resolution: usize,
    /// Solver tolerance, relative to `max(1, max_y |sigma^T p|^2)`.
    pub tol: T,
    /// Discount schedule of the subcritical cell solver.
    pub deltas: Vec<T>,
    /// Memo key resolution for cell-problem results.
    pub memo_step: f64,
    /// Use closed forms when the model structure allows it.
    pub fast_paths: bool,
}

impl<T: Real> Default for HamiltonianOptions<T> {
    fn default() -> Self {
        HamiltonianOptions {
            resolution: 64,
            tol: lit(1e-6),
            deltas: default_deltas(),
            memo_step: 1e-9,
            fast_paths: true,
        }
    }
}

/// Regime dispatcher for `H(x, p)`.
///
/// Supercritical values are quadratures against a cached invariant measure.
/// Critical and subcritical values come from cell problems, memoized on
/// `(x, p)` snapped to a lattice of step `memo_step`; solvers are evaluated at
/// the snapped point so a cached value never depends on evaluation order.
pub struct EffectiveHamiltonian<T: Real> {
    model: VolatilityModel<T>,
    regime: Regime<T>,
    grid: TorusGrid,
    opts: HamiltonianOptions<T>,
    measure: Option<InvariantMeasure<T>>,
    nu: Option<T>,
    growth: (T, T),
    structural: bool,
    memo: RwLock<HashMap<Vec<i64>, HamiltonianValue<T>>>,
}

impl<T: Real> fmt::Debug for EffectiveHamiltonian<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EffectiveHamiltonian")
            .field("model", &self.model.name())
            .field("regime", &self.regime)
            .field("grid", &self.grid)
            .field("nu", &self.nu)
            .field("growth", &self.growth)
            .finish()
    }
}

impl<T: Real> EffectiveHamiltonian<T> {
    pub fn new(
        model: &VolatilityModel<T>,
        regime: Regime<T>,
        opts: HamiltonianOptions<T>,
    ) -> Result<Self> {
        let grid = TorusGrid::uniform(model.m(), opts.resolution)?;
        let measure = match regime.kind {
            RegimeKind::Supercritical => Some(solve_invariant_measure(model, &grid, lit(1e-8))?),
            _ => None,
        };
        let growth = measured_growth(model, &grid);
        let t = model.traits();
        let structural = t.sigma_x_independent || t.sigma_y_independent || t.uncorrelated;
        if regime.kind == RegimeKind::Critical && !structural {
            log::warn!(
                "model '{}': sigma depends on x and y and is correlated with the fast noise; \
                 the critical limit is computed but its uniqueness is not covered by a comparison principle",
                model.name()
            );
        }
        Ok(EffectiveHamiltonian {
            model: model.clone(),
            regime,
            grid,
            opts,
            measure,
            nu: (growth.0 > T::zero()).then_some(growth.0),
            growth,
            structural,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &VolatilityModel<T> {
        &self.model
    }
    pub fn regime(&self) -> Regime<T> {
        self.regime
    }
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn options(&self) -> &HamiltonianOptions<T> {
        &self.opts
    }
    /// Coercivity constant `nu` with `|sigma^T p|^2 >= nu |p|^2`, when positive.
    pub fn nu(&self) -> Option<T> {
        self.nu
    }
    /// Whether one of the structural conditions for a unique critical limit holds.
    pub fn structural_condition(&self) -> bool {
        self.structural
    }
    pub fn invariant_measure(&self) -> Option<&InvariantMeasure<T>> {
        self.measure.as_ref()
    }
    /// Number of memoized cell solutions.
    pub fn memo_len(&self) -> usize {
        self.memo.read().map(|m| m.len()).unwrap_or(0)
    }

    /// `H(x, p)` with the route taken and the solver residual.
    pub fn evaluate(&self, x: &[T], p: &[T]) -> Result<HamiltonianValue<T>> {
        check_len(self.model.n(), x, p)?;
        if norm(p) < lit(1e-14) {
            return Ok(HamiltonianValue {
                value: T::zero(),
                method: HamiltonianMethod::Zero,
                residual: 0.0,
            });
        }
        let t = self.model.traits();
        if self.opts.fast_paths && t.sigma_y_independent {
            let mut s = self.model.scratch();
            let y = vec![T::zero(); self.model.m()];
            return Ok(HamiltonianValue {
                value: self.model.sigma_t_p_sq(x, &y, p, &mut s),
                method: HamiltonianMethod::Frozen,
                residual: 0.0,
            });
        }
        match self.regime.kind {
            RegimeKind::Supercritical => {
                let mu = self
                    .measure
                    .as_ref()
                    .expect("measure cached for supercritical regime");
                Ok(HamiltonianValue {
                    value: h_bar_supercritical(&self.model, mu, x, p)?,
                    method: HamiltonianMethod::Averaged,
                    residual: to_f64(mu.residual_norm),
                })
            }
            RegimeKind::Subcritical if self.opts.fast_paths && t.uncorrelated => {
                Ok(HamiltonianValue {
                    value: h_bar_uncorrelated_max(&self.model, &self.grid, x, p),
                    method: HamiltonianMethod::MaxFormula,
                    residual: 0.0,
                })
            }
            _ => self.memoized(x, p),
        }
    }

    fn memoized(&self, x: &[T], p: &[T]) -> Result<HamiltonianValue<T>> {
        let step = self.opts.memo_step;
        let key: Vec<i64> = x
            .iter()
            .chain(p)
            .map(|&v| (to_f64(v) / step).round() as i64)
            .collect();
        if let Some(hit) = self.memo.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(hit);
        }
        let n = self.model.n();
        let snap: Vec<T> = key.iter().map(|&k| lit(k as f64 * step)).collect();
        let (xs, ps) = snap.split_at(n);
        let value = self.solve(xs, ps)?;
        if let Ok(mut m) = self.memo.write() {
            m.insert(key, value);
        }
        Ok(value)
    }

    fn solve(&self, x: &[T], p: &[T]) -> Result<HamiltonianValue<T>> {
        let model = &self.model;
        if norm(p) < lit(1e-14) {
            return Ok(HamiltonianValue {
                value: T::zero(),
                method: HamiltonianMethod::Zero,
                residual: 0.0,
            });
        }
        match self.regime.kind {
            RegimeKind::Critical => {
                let s = solve_cell_critical_eigen(model, &self.grid, x, p, self.opts.tol)?;
                Ok(HamiltonianValue {
                    value: s.h_bar,
                    method: HamiltonianMethod::Eigenvalue,
                    residual: s.diagnostics.residual,
                })
            }
            _ => {
                if self.opts.fast_paths && model.n() == 1 && model.m() == 1 && model.r() == 1 {
                    if let Some(v) = self.closed_form_1d(x, p[0]) {
                        return Ok(HamiltonianValue {
                            value: v,
                            method: HamiltonianMethod::ClosedForm1d,
                            residual: 0.0,
                        });
                    }
                }
                let s = solve_cell_subcritical(
                    model,
                    &self.grid,
                    x,
                    p,
                    &self.opts.deltas,
                    self.opts.tol,
                )?;
                Ok(HamiltonianValue {
                    value: s.h_bar,
                    method: HamiltonianMethod::CellSolver,
                    residual: s.diagnostics.residual,
                })
            }
        }
    }

    /// Quadrature formula, available when `sigma(x, .)` keeps one sign and `tau > 0`.
    fn closed_form_1d(&self, x: &[T], p: T) -> Option<T> {
        let model = &self.model;
        let quad = 16 * self.opts.resolution;
        let eval_sigma = |y: T| {
            let mut out = [T::zero()];
            model.sigma(x, &[y], &mut out);
            out[0]
        };
        let eval_tau = |y: T| {
            let mut out = [T::zero()];
            model.tau(&[y], &mut out);
            out[0]
        };
        let nq: T = from_usize(quad);
        let samples: Vec<(T, T)> = (0..quad)
            .map(|i| {
                let y = from_usize::<T>(i) / nq;
                (eval_sigma(y), eval_tau(y))
            })
            .collect();
        let sig_sign = if samples.iter().all(|&(s, _)| s >= T::zero()) {
            T::one()
        } else if samples.iter().all(|&(s, _)| s <= T::zero()) {
            -T::one()
        } else {
            return None;
        };
        let tau_sign = if samples.iter().all(|&(_, t)| t > T::zero()) {
            T::one()
        } else if samples.iter().all(|&(_, t)| t < T::zero()) {
            -T::one()
        } else {
            return None;
        };
        h_bar_subcritical_closed_1d(
            |y| sig_sign * eval_sigma(y),
            |y| tau_sign * eval_tau(y),
            p,
            quad,
        )
        .ok()
    }
}

impl<T: Real> Hamiltonian<T> for EffectiveHamiltonian<T> {
    fn dim(&self) -> usize {
        self.model.n()
    }
    fn eval(&self, x: &[T], p: &[T]) -> Result<T> {
        self.evaluate(x, p).map(|v| v.value)
    }
    fn x_independent(&self) -> bool {
        self.model.traits().sigma_x_independent
    }
    fn growth(&self) -> (T, T) {
        self.growth
    }
    fn growth_at(&self, x: &[T]) -> (T, T) {
        if self.model.traits().sigma_x_independent {
            return self.growth;
        }
        sigma_eig_range(&self.model, &self.grid, &[x.to_vec()])
    }
}

/// Extreme eigenvalues of `sigma sigma^T` over the nodes of `grid` and the
/// probe points `x in {-4, ..., 4}^n` (only `x = 0` when `sigma` ignores `x`).
pub fn measured_growth<T: Real>(model: &VolatilityModel<T>, grid: &TorusGrid) -> (T, T) {
    let n = model.n();
    let xs: Vec<Vec<T>> = if model.traits().sigma_x_independent {
        vec![vec![T::zero(); n]]
    } else {
        let count = 9usize.pow(n as u32);
        (0..count)
            .map(|mut c| {
                (0..n)
                    .map(|_| {
                        let d = c % 9;
                        c /= 9;
                        from_usize::<T>(d) - lit(4.0)
                    })
                    .collect()
            })
            .collect()
    };
    sigma_eig_range(model, grid, &xs)
}

fn sigma_eig_range<T: Real>(model: &VolatilityModel<T>, grid: &TorusGrid, xs: &[Vec<T>]) -> (T, T) {
    let (n, r) = (model.n(), model.r());
    let mut y = vec![T::zero(); grid.dim()];
    let mut s = model.scratch();
    let mut a = vec![T::zero(); n * n];
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for x in xs {
        for i in 0..grid.len() {
            grid.node(i, &mut y);
            model.sigma(x, &y, &mut s.sigma);
            for p in 0..n {
                for q in 0..n {
                    let mut acc = T::zero();
                    for k in 0..r {
                        acc += s.sigma[p * r + k] * s.sigma[q * r + k];
                    }
                    a[p * n + q] = acc;
                }
            }
            let (l, h) = sym_eig_range(n, &a);
            lo = lo.min(l);
            hi = hi.max(h);
        }
    }
    (lo.max(T::zero()), hi)
}

fn sym_eig_range<T: Real>(n: usize, a: &[T]) -> (T, T) {
    if n == 1 {
        return (a[0], a[0]);
    }
    let m = DMatrix::from_fn(n, n, |i, j| to_f64(a[i * n + j]));
    let ev = m.symmetric_eigenvalues();
    (lit(ev.min()), lit(ev.max()))
}

fn quad_form<T: Real>(n: usize, m: &[T], p: &[T]) -> T {
    let mut acc = T::zero();
    for a in 0..n {
        for b in 0..n {
            acc += p[a] * m[a * n + b] * p[b];
        }
    }
    acc
}

fn check_len<T>(n: usize, x: &[T], p: &[T]) -> Result<()> {
    if x.len() != n || p.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Hamiltonian argument",
            detail: format!("x and p must have length {n}"),
        });
    }
    Ok(())
}
