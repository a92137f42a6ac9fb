use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// Uniform periodic grid on `[0,1)^m`. Node multi-indices are enumerated
/// row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl TorusGrid {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::GridMismatch("grid needs at least one axis".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d < 4) {
            return Err(Error::GridMismatch(format!(
                "every axis needs at least 4 nodes, got {bad}"
            )));
        }
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len() - 1).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(Self { dims, strides })
    }

    /// `m`-dimensional grid with `n` nodes per axis.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; m])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn spacing<T: Real>(&self, axis: usize) -> T {
        T::one() / from_usize(self.dims[axis])
    }
    /// Volume of one grid cell, `prod h_k`.
    pub fn cell_volume<T: Real>(&self) -> T {
        self.dims
            .iter()
            .fold(T::one(), |acc, &d| acc / from_usize(d))
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in 0..self.dims.len() {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
    }
    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    /// Coordinates of node `idx`.
    pub fn node<T: Real>(&self, idx: usize, out: &mut [T]) {
        let mut rest = idx;
        for k in 0..self.dims.len() {
            let i = rest / self.strides[k];
            rest %= self.strides[k];
            out[k] = from_usize::<T>(i) / from_usize(self.dims[k]);
        }
    }

    /// Index of the node `shift` steps away from `idx` along `axis`, wrapping.
    pub fn neighbor(&self, idx: usize, axis: usize, shift: isize) -> usize {
        let n = self.dims[axis] as isize;
        let s = self.strides[axis];
        let i = ((idx / s) % self.dims[axis]) as isize;
        let j = (i + shift).rem_euclid(n) as usize;
        idx - (i as usize) * s + j * s
    }
}

/// Scalar field sampled on a [`TorusGrid`], interpolated multilinearly with
/// periodic wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: TorusGrid,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: TorusGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[T]) -> T) -> Self {
        let mut y = vec![T::zero(); grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.node(i, &mut y);
                f(&y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `sum_i f(y_i) prod h_k`.
    pub fn integral(&self) -> T {
        crate::stats::pairwise_sum(&self.values) * self.grid.cell_volume::<T>()
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Multilinear periodic interpolation; exact at nodes.
    pub fn interpolate(&self, y: &[T]) -> T {
        let m = self.grid.dim();
        debug_assert_eq!(y.len(), m);
        let mut base = [0usize; 8];
        let mut frac = [T::zero(); 8];
        let mut base_v;
        let mut frac_v;
        let (base, frac): (&mut [usize], &mut [T]) = if m <= 8 {
            (&mut base[..m], &mut frac[..m])
        } else {
            base_v = vec![0usize; m];
            frac_v = vec![T::zero(); m];
            (&mut base_v[..], &mut frac_v[..])
        };
        for k in 0..m {
            let nk = self.grid.dims[k];
            let n: T = from_usize(nk);
            let w = y[k] - y[k].floor();
            let mut s = w * n;
            let si = s.round();
            if (s - si).abs() <= T::epsilon() * n * from_usize(16) {
                s = si;
            }
            let fl = s.floor();
            frac[k] = s - fl;
            base[k] = (fl.to_usize().unwrap_or(0)) % nk;
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << m) {
            let mut weight = T::one();
            let mut idx = 0;
            for k in 0..m {
                let up = (corner >> k) & 1 == 1;
                let f = frac[k];
                if up {
                    if f == T::zero() {
                        weight = T::zero();
                        break;
                    }
                    weight *= f;
                    idx += ((base[k] + 1) % self.grid.dims[k]) * self.grid.strides[k];
                } else {
                    weight *= T::one() - f;
                    idx += base[k] * self.grid.strides[k];
                }
            }
            if weight != T::zero() {
                acc += weight * self.values[idx];
            }
        }
        acc
    }
}
