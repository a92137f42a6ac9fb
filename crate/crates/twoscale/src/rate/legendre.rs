use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::scalar::{from_usize, lit, norm, Real};

/// Maximizer and value of `p . q - H(x, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint<T> {
    pub value: T,
    pub argmax: Vec<T>,
}

/// `L(x, q) = max_p { p . q - H(x, p) }`, evaluated by nested grid search.
///
/// The search box has half-width `|q| / nu` where `nu` is the measured lower
/// growth constant of `H` at `x`; a maximizer on the box edge doubles the box.
#[derive(Clone)]
pub struct EffectiveLagrangian<T: Real> {
    h: Arc<dyn Hamiltonian<T>>,
    /// Local grid refinements around the coarse maximizer.
    pub refinements: usize,
    /// Box doublings allowed before reporting `NotCoercive`.
    pub max_growth_steps: usize,
}

impl<T: Real> fmt::Debug for EffectiveLagrangian<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EffectiveLagrangian")
            .field("dim", &self.h.dim())
            .field("growth", &self.h.growth())
            .field("refinements", &self.refinements)
            .finish()
    }
}

impl<T: Real> EffectiveLagrangian<T> {
    pub fn new(h: Arc<dyn Hamiltonian<T>>) -> Self {
        EffectiveLagrangian {
            h,
            refinements: 3,
            max_growth_steps: 8,
        }
    }

    pub fn hamiltonian(&self) -> &Arc<dyn Hamiltonian<T>> {
        &self.h
    }
    pub fn dim(&self) -> usize {
        self.h.dim()
    }
    pub fn x_independent(&self) -> bool {
        self.h.x_independent()
    }
    /// Growth constants `(nu, c)` of the Hamiltonian; `L` then satisfies
    /// `|q|^2 / (4c) <= L(x, q) <= |q|^2 / (4 nu)`.
    pub fn growth(&self) -> (T, T) {
        self.h.growth()
    }

    pub fn eval(&self, x: &[T], q: &[T]) -> Result<T> {
        self.point(x, q).map(|p| p.value)
    }

    pub fn point(&self, x: &[T], q: &[T]) -> Result<LegendrePoint<T>> {
        let n = self.h.dim();
        if x.len() != n || q.len() != n {
            return Err(Error::DimensionMismatch {
                what: "Lagrangian argument",
                detail: format!("x and q must have length {n}"),
            });
        }
        let qn = norm(q);
        if qn == T::zero() {
            return Ok(LegendrePoint {
                value: T::zero(),
                argmax: vec![T::zero(); n],
            });
        }
        let objective = |p: &[T]| -> Result<T> {
            let dot = p.iter().zip(q).fold(T::zero(), |a, (&pi, &qi)| a + pi * qi);
            Ok(dot - self.h.eval(x, p)?)
        };
        let (nu, c) = self.h.growth_at(x);
        let floor = lit::<T>(1e-6).max(T::epsilon().sqrt());
        let mut radius = if nu > T::zero() {
            qn / nu
        } else {
            qn / c.max(T::epsilon()) * lit(4.0)
        }
        .max(floor);
        let count = match n {
            1 => 41,
            2 => 21,
            _ => 9,
        };
        let origin = vec![T::zero(); n];
        let mut best = None;
        for _ in 0..=self.max_growth_steps {
            let (arg, val, on_edge) = box_search(&objective, &origin, radius, count)?;
            if !on_edge {
                best = Some((arg, val, radius));
                break;
            }
            radius *= lit(2.0);
        }
        let Some((mut arg, mut val, radius)) = best else {
            return Err(Error::NotCoercive(format!(
                "maximizer of p.q - H(x,p) still on the search box edge at radius {radius}"
            )));
        };
        let mut spacing = radius * lit(2.0) / from_usize(count - 1);
        for _ in 0..self.refinements {
            let half = spacing * lit(2.0);
            let (a, v, _) = box_search(&objective, &arg, half, count)?;
            if v >= val {
                arg = a;
                val = v;
            }
            spacing = half * lit(2.0) / from_usize(count - 1);
        }
        // parabolic polish along each axis; exact for quadratic objectives
        let mut step = spacing;
        for _ in 0..2 {
            for k in 0..n {
                let mut probe = arg.clone();
                probe[k] = arg[k] - step;
                let fm = objective(&probe)?;
                probe[k] = arg[k] + step;
                let fp = objective(&probe)?;
                let curv = val + val - fm - fp;
                if curv > T::zero() {
                    probe[k] = arg[k] + step * (fp - fm) / (curv + curv);
                    let f = objective(&probe)?;
                    if f > val {
                        arg = probe;
                        val = f;
                    }
                }
            }
            step *= lit(0.1);
        }
        Ok(LegendrePoint {
            value: val.max(T::zero()),
            argmax: arg,
        })
    }
}

/// `L(x, q)` for the Hamiltonian `h`.
pub fn legendre<T: Real>(h: Arc<dyn Hamiltonian<T>>, x: &[T], q: &[T]) -> Result<T> {
    EffectiveLagrangian::new(h).eval(x, q)
}

/// Tensor grid search on the cube of half-width `radius` around `center`.
/// Returns the maximizer, its value and whether it lies on the cube boundary.
fn box_search<T: Real>(
    f: &impl Fn(&[T]) -> Result<T>,
    center: &[T],
    radius: T,
    count: usize,
) -> Result<(Vec<T>, T, bool)> {
    let n = center.len();
    let total = count.pow(n as u32);
    let step = radius * lit(2.0) / from_usize(count - 1);
    let mut p = vec![T::zero(); n];
    let mut best_val = T::neg_infinity();
    let mut best_idx = vec![0usize; n];
    let mut idx = vec![0usize; n];
    for c in 0..total {
        let mut rem = c;
        for k in (0..n).rev() {
            idx[k] = rem % count;
            rem /= count;
            p[k] = center[k] - radius + step * from_usize(idx[k]);
        }
        let v = f(&p)?;
        if v > best_val {
            best_val = v;
            best_idx.copy_from_slice(&idx);
        }
    }
    let arg = (0..n)
        .map(|k| center[k] - radius + step * from_usize(best_idx[k]))
        .collect();
    let edge = best_idx.iter().any(|&i| i == 0 || i == count - 1);
    Ok((arg, best_val, edge))
}
