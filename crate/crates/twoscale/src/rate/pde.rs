use super::{EffectiveLagrangian, TestFunction};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::scalar::{from_usize, lit, Real};

/// Uniform grid `lo = z_0 < ... < z_{n-1} = hi` on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> LineGrid<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::precondition(
                "line grid needs hi > lo and at least three nodes",
            ));
        }
        Ok(LineGrid { lo, hi, n })
    }
    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / from_usize(self.n - 1)
    }
    pub fn node(&self, i: usize) -> T {
        self.lo + self.spacing() * from_usize(i)
    }
}

/// Values on a [`LineGrid`] with linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct LineField<T> {
    pub grid: LineGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> LineField<T> {
    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interpolate(&self, z: T) -> T {
        let s = ((z - self.grid.lo) / self.grid.spacing()).max(T::zero());
        let last = self.grid.n - 1;
        let k = s.floor().to_usize().unwrap_or(last).min(last);
        if k == last {
            return self.values[last];
        }
        let f = s - from_usize(k);
        self.values[k] * (T::one() - f) + self.values[k + 1] * f
    }
}

fn one_dimensional(dim: usize) -> Result<()> {
    if dim != 1 {
        return Err(Error::precondition(
            "only one-dimensional problems are supported",
        ));
    }
    Ok(())
}

/// `v(t, x) = sup_y { h(y) - t L((y - x) / t) }` for an `x`-independent `L`.
///
/// Only `y` with `|y - x|^2 / (4 c t) <= sup h - h(x)` can beat `y = x`, which
/// bounds the search interval. The supremum is located on a 401-point grid and
/// refined around the best node down to a relative step of `1e-11`.
pub fn hopf_lax<T: Real>(l: &EffectiveLagrangian<T>, h: &TestFunction<T>, t: T, x: T) -> Result<T> {
    one_dimensional(l.dim())?;
    if !l.x_independent() {
        return Err(Error::NotXIndependent);
    }
    if !(t > T::zero()) {
        return Err(Error::precondition("time must be positive"));
    }
    let hx = h.eval(x);
    let gain = h.sup() - hx;
    if !(gain > T::zero()) {
        return Ok(hx);
    }
    let (_, c) = l.growth();
    let radius =
        (lit::<T>(4.0) * c * t * gain).sqrt() * lit(1.05) + T::epsilon() * (T::one() + x.abs());
    let objective = |y: T| -> Result<T> { Ok(h.eval(y) - t * l.eval(&[x], &[(y - x) / t])?) };
    let (mut arg, mut best) = line_search(&objective, x, radius, 401)?;
    let mut step = radius * lit(2.0) / lit(400.0);
    let floor = lit::<T>(1e-11) * (T::one() + x.abs() + radius);
    while step > floor {
        let (a, v) = line_search(&objective, arg, step * lit(2.0), 41)?;
        if v >= best {
            arg = a;
            best = v;
        }
        step = step * lit(4.0) / lit(40.0);
    }
    let fm = objective(arg - step)?;
    let fp = objective(arg + step)?;
    let curv = best + best - fm - fp;
    if curv > T::zero() {
        let y = arg + step * (fp - fm) / (curv + curv);
        best = best.max(objective(y)?);
    }
    Ok(best.max(hx))
}

fn line_search<T: Real>(
    f: &impl Fn(T) -> Result<T>,
    center: T,
    radius: T,
    count: usize,
) -> Result<(T, T)> {
    let step = radius * lit(2.0) / from_usize(count - 1);
    let mut best = (center, f(center)?);
    for i in 0..count {
        let y = center - radius + step * from_usize(i);
        let v = f(y)?;
        if v > best.1 {
            best = (y, v);
        }
    }
    Ok(best)
}

/// Sup of `|dH/dp|` over the grid positions and `|p| <= p_bound`, by central differences.
fn measured_speed<T: Real>(h: &dyn Hamiltonian<T>, grid: &LineGrid<T>, p_bound: T) -> Result<T> {
    let xs: Vec<T> = if h.x_independent() {
        vec![grid.lo]
    } else {
        (0..grid.n).map(|i| grid.node(i)).collect()
    };
    let samples = 33;
    let eta = p_bound * lit(1e-4);
    let mut speed = T::zero();
    for &x in &xs {
        for j in 0..samples {
            let p = -p_bound + p_bound * lit::<T>(2.0) * from_usize(j) / from_usize(samples - 1);
            let d = (h.eval(&[x], &[p + eta])? - h.eval(&[x], &[p - eta])?) / (eta + eta);
            speed = speed.max(d.abs());
        }
    }
    Ok(speed)
}

/// `v(t, .)` for `v_t - H(x, v_x) = 0`, `v(0, .) = h`, by the explicit
/// Lax–Friedrichs scheme on `grid` with linearly extrapolated ghost nodes.
///
/// The dissipation `theta` is 1.1 times the measured `max |dH/dp|` over
/// gradients up to 1.25 times the Lipschitz constant of the data, and
/// `dt = cfl dx / theta`. A gradient leaving that range is re-measured and
/// reported as `UnstableStep` if the step no longer satisfies the monotonicity
/// condition `dt theta <= dx`.
pub fn solve_effective_pde<T: Real>(
    h_fn: &dyn Hamiltonian<T>,
    h: &TestFunction<T>,
    t: T,
    grid: LineGrid<T>,
    cfl: T,
) -> Result<LineField<T>> {
    one_dimensional(h_fn.dim())?;
    if !(cfl > T::zero() && cfl <= lit(0.9)) {
        return Err(Error::precondition("cfl must lie in (0, 0.9]"));
    }
    if t < T::zero() {
        return Err(Error::precondition("time must be non-negative"));
    }
    let n = grid.n;
    let dx = grid.spacing();
    let xs: Vec<T> = (0..n).map(|i| grid.node(i)).collect();
    let mut v: Vec<T> = xs.iter().map(|&z| h.eval(z)).collect();
    if t == T::zero() {
        return Ok(LineField { grid, values: v });
    }
    let max_grad = |v: &[T]| {
        v.windows(2)
            .fold(T::zero(), |a, w| a.max(((w[1] - w[0]) / dx).abs()))
    };
    let mut p_bound = (max_grad(&v) * lit(1.25)).max(lit(1e-8));
    let mut theta = measured_speed(h_fn, &grid, p_bound)? * lit(1.1) + lit(1e-12);
    let steps = (t * theta / (cfl * dx))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let dt = t / from_usize(steps);
    let half: T = lit(0.5);
    let mut next = vec![T::zero(); n];
    for _ in 0..steps {
        let g = max_grad(&v);
        if g > p_bound {
            p_bound = g * lit(1.25);
            theta = theta.max(measured_speed(h_fn, &grid, p_bound)? * lit(1.1));
            if dt * theta > dx {
                return Err(Error::UnstableStep(format!(
                    "gradient {g} needs dissipation {theta}, step {dt} exceeds dx / theta"
                )));
            }
        }
        for i in 0..n {
            let left = if i == 0 { v[0] + v[0] - v[1] } else { v[i - 1] };
            let right = if i == n - 1 {
                v[n - 1] + v[n - 1] - v[n - 2]
            } else {
                v[i + 1]
            };
            let dp = (right - v[i]) / dx;
            let dm = (v[i] - left) / dx;
            let hv = h_fn.eval(&[xs[i]], &[(dp + dm) * half])?;
            next[i] = v[i] + dt * (hv + theta * half * (dp - dm));
        }
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("effective PDE solution".into()));
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(LineField { grid, values: v })
}
