use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::EffectiveLagrangian;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, norm, Real};

/// Value of the rate function and the discrete path attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunctionResult<T> {
    pub value: T,
    /// Nodes `(s_k, xi_k)` with `xi_0 = x0` and `xi_K = x`.
    pub path: Vec<(T, Vec<T>)>,
    /// Descent iterations of the best start.
    pub iterations: usize,
    pub converged: bool,
    /// Action of the straight line from `x0` to `x`.
    pub straight_line: T,
}

/// Settings for [`rate_general`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Number of time segments `K`.
    pub segments: usize,
    /// Randomly perturbed starts in addition to the straight line.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the gradient sup-norm falls below `gtol * max(1, action)`.
    pub gtol: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            segments: 64,
            restarts: 4,
            seed: 0,
            max_iter: 400,
            gtol: 1e-7,
        }
    }
}

/// Bounds `|x - x0|^2 / (4 c t) <= I <= |x - x0|^2 / (4 nu t)` from the growth
/// constants of the Hamiltonian. The upper bound is infinite when `nu = 0`.
pub fn growth_bounds<T: Real>(l: &EffectiveLagrangian<T>, x0: &[T], x: &[T], t: T) -> (T, T) {
    let (nu, c) = l.growth();
    let d2 = x
        .iter()
        .zip(x0)
        .fold(T::zero(), |a, (&u, &v)| a + (u - v) * (u - v));
    let four_t: T = lit::<T>(4.0) * t;
    let lo = if c > T::zero() {
        d2 / (four_t * c)
    } else {
        T::zero()
    };
    let hi = if nu > T::zero() {
        d2 / (four_t * nu)
    } else {
        T::infinity()
    };
    (lo, hi)
}

fn check_args<T: Real>(l: &EffectiveLagrangian<T>, x0: &[T], x: &[T], t: T) -> Result<()> {
    let n = l.dim();
    if x0.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch {
            what: "rate function endpoints",
            detail: format!("x0 and x must have length {n}"),
        });
    }
    if !(t > T::zero()) {
        return Err(Error::precondition("time horizon must be positive"));
    }
    Ok(())
}

fn straight_path<T: Real>(x0: &[T], x: &[T], t: T, k: usize) -> Vec<(T, Vec<T>)> {
    (0..=k)
        .map(|j| {
            let f = from_usize::<T>(j) / from_usize(k);
            (
                t * f,
                x0.iter().zip(x).map(|(&a, &b)| a + (b - a) * f).collect(),
            )
        })
        .collect()
}

/// `I(x; x0, t) = t L((x - x0) / t)` for Lagrangians that do not depend on `x`.
pub fn rate_x_independent<T: Real>(
    l: &EffectiveLagrangian<T>,
    x0: &[T],
    x: &[T],
    t: T,
    segments: usize,
) -> Result<RateFunctionResult<T>> {
    check_args(l, x0, x, t)?;
    if !l.x_independent() {
        return Err(Error::NotXIndependent);
    }
    let q: Vec<T> = x.iter().zip(x0).map(|(&a, &b)| (a - b) / t).collect();
    let value = t * l.eval(x0, &q)?;
    Ok(RateFunctionResult {
        value,
        path: straight_path(x0, x, t, segments.max(1)),
        iterations: 0,
        converged: true,
        straight_line: value,
    })
}

/// Discrete action `sum_k L(mid_k, (xi_{k+1} - xi_k) / ds) ds` of the path
/// `x0, z_1, ..., z_{K-1}, x`.
struct Action<'a, T: Real> {
    l: &'a EffectiveLagrangian<T>,
    x0: &'a [T],
    x: &'a [T],
    n: usize,
    k: usize,
    ds: T,
}

impl<T: Real> Action<'_, T> {
    fn node<'b>(&'b self, z: &'b [T], j: usize) -> &'b [T] {
        if j == 0 {
            self.x0
        } else if j == self.k {
            self.x
        } else {
            &z[(j - 1) * self.n..j * self.n]
        }
    }

    fn segment(&self, a: &[T], b: &[T]) -> Result<T> {
        let half: T = lit(0.5);
        let mid: Vec<T> = a.iter().zip(b).map(|(&u, &v)| (u + v) * half).collect();
        let q: Vec<T> = a.iter().zip(b).map(|(&u, &v)| (v - u) / self.ds).collect();
        Ok(self.l.eval(&mid, &q)? * self.ds)
    }

    fn value(&self, z: &[T]) -> Result<T> {
        let mut total = T::zero();
        for j in 0..self.k {
            total += self.segment(self.node(z, j), self.node(z, j + 1))?;
        }
        Ok(total)
    }

    /// Central-difference gradient; each coordinate touches two segments.
    fn gradient(&self, z: &[T], g: &mut [T]) -> Result<()> {
        let mut zz = z.to_vec();
        for j in 1..self.k {
            for c in 0..self.n {
                let idx = (j - 1) * self.n + c;
                let eta = lit::<T>(1e-5) * (T::one() + z[idx].abs());
                zz[idx] = z[idx] + eta;
                let fp = self.segment(self.node(&zz, j - 1), self.node(&zz, j))?
                    + self.segment(self.node(&zz, j), self.node(&zz, j + 1))?;
                zz[idx] = z[idx] - eta;
                let fm = self.segment(self.node(&zz, j - 1), self.node(&zz, j))?
                    + self.segment(self.node(&zz, j), self.node(&zz, j + 1))?;
                zz[idx] = z[idx];
                g[idx] = (fp - fm) / (eta + eta);
            }
        }
        Ok(())
    }
}

struct Descent<T> {
    z: Vec<T>,
    value: T,
    iterations: usize,
    converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs<T: Real>(act: &Action<'_, T>, mut z: Vec<T>, opts: &RateOptions) -> Result<Descent<T>> {
    let dim = z.len();
    let memory = 8;
    let mut f = act.value(&z)?;
    let mut g = vec![T::zero(); dim];
    act.gradient(&z, &mut g)?;
    let mut hist: Vec<(Vec<T>, Vec<T>, T)> = Vec::new();
    let gtol: T = lit(opts.gtol);
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc + u * v);
    let sup = |a: &[T]| a.iter().fold(T::zero(), |acc, &u| acc.max(u.abs()));
    let window = 25;
    let mut trace: Vec<T> = Vec::with_capacity(opts.max_iter + 1);
    for it in 0..opts.max_iter {
        trace.push(f);
        if it >= window && trace[it - window] - f <= lit::<T>(1e-12) * f.abs().max(T::one()) {
            let tiny = sup(&g) <= lit::<T>(1e3) * gtol * f.max(T::one());
            return Ok(Descent {
                z,
                value: f,
                iterations: it,
                converged: tiny,
            });
        }
        if sup(&g) <= gtol * f.max(T::one()) {
            return Ok(Descent {
                z,
                value: f,
                iterations: it,
                converged: true,
            });
        }
        // two-loop recursion
        let mut d: Vec<T> = g.iter().map(|&v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = *rho * dot(s, &d);
            for i in 0..dim {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            for v in d.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &d);
            for i in 0..dim {
                d[i] += s[i] * (*a - b);
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            hist.clear();
            d = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<T> = z.iter().zip(&d).map(|(&a, &b)| a + step * b).collect();
            let ft = act.value(&trial)?;
            if ft <= f + lit::<T>(1e-4) * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= lit(0.5);
        }
        let Some((zn, fnew)) = accepted else {
            // no descent along the search direction: stationary to working precision
            let tiny = sup(&g) <= lit::<T>(1e3) * gtol * f.max(T::one());
            return Ok(Descent {
                z,
                value: f,
                iterations: it,
                converged: tiny,
            });
        };
        let mut gn = vec![T::zero(); dim];
        act.gradient(&zn, &mut gn)?;
        let s: Vec<T> = zn.iter().zip(&z).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == memory {
                hist.remove(0);
            }
            hist.push((s, y, T::one() / sy));
        }
        z = zn;
        f = fnew;
        g = gn;
    }
    Ok(Descent {
        z,
        value: f,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// `I(x; x0, t)` by minimizing the discrete action over paths with `K`
/// segments, starting from the straight line and from randomly perturbed
/// paths. Starts run in parallel; each draws from its own seeded stream.
pub fn rate_general<T: Real>(
    l: &EffectiveLagrangian<T>,
    x0: &[T],
    x: &[T],
    t: T,
    opts: &RateOptions,
) -> Result<RateFunctionResult<T>> {
    check_args(l, x0, x, t)?;
    if opts.segments < 8 {
        return Err(Error::precondition(
            "rate_general needs at least 8 segments",
        ));
    }
    let n = l.dim();
    let k = opts.segments;
    let act = Action {
        l,
        x0,
        x,
        n,
        k,
        ds: t / from_usize(k),
    };
    let straight = straight_path(x0, x, t, k);
    let z0: Vec<T> = straight[1..k]
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .collect();
    let straight_value = act.value(&z0)?;
    let dist: Vec<T> = x.iter().zip(x0).map(|(&a, &b)| a - b).collect();
    let (_, c) = l.growth();
    let amp = (norm(&dist) + (c * t).sqrt()) * lit(0.1);

    let runs: Vec<Result<Descent<T>>> = (0..=opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut z = z0.clone();
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                for c in 0..n {
                    for mode in 1..=3usize {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        let a = amp * lit(g / mode as f64);
                        for j in 1..k {
                            let s = from_usize::<T>(j * mode) / from_usize(k);
                            z[(j - 1) * n + c] += a * (T::PI() * s).sin();
                        }
                    }
                }
            }
            lbfgs(&act, z, opts)
        })
        .collect();
    let mut best: Option<Descent<T>> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().map_or(true, |b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        log::warn!("rate_general: action minimization stopped before convergence; returning best path found");
    }
    let path = (0..=k)
        .map(|j| {
            (
                t * from_usize(j) / from_usize(k),
                act.node(&best.z, j).to_vec(),
            )
        })
        .collect();
    Ok(RateFunctionResult {
        value: best.value.max(T::zero()),
        path,
        iterations: best.iterations,
        converged: best.converged,
        straight_line: straight_value,
    })
}
