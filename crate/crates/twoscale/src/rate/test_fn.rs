use std::fmt;
use std::sync::Arc;

use crate::scalar::Real;

/// Scalar test functions `h` for the limit Hamilton–Jacobi equation.
#[derive(Clone)]
pub enum TestFunction<T: Real> {
    Constant(T),
    /// `max(floor, min(0, slope * (y - knot)))`: zero beyond the knot on the
    /// side `slope` points to, linear to `floor` on the other side.
    Cap {
        knot: T,
        slope: T,
        floor: T,
    },
    /// `-depth * (1 - exp(-(y - center)^2 / (2 width^2)))`.
    Well {
        center: T,
        depth: T,
        width: T,
    },
    /// `-coef * (y - center)^2` (unbounded below).
    Quadratic {
        center: T,
        coef: T,
    },
    /// User function with its supremum.
    Custom {
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
        sup: T,
        name: String,
    },
}

impl<T: Real> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Constant(c) => write!(f, "Constant({c})"),
            TestFunction::Cap { knot, slope, floor } => {
                write!(f, "Cap(knot={knot}, slope={slope}, floor={floor})")
            }
            TestFunction::Well {
                center,
                depth,
                width,
            } => {
                write!(f, "Well(center={center}, depth={depth}, width={width})")
            }
            TestFunction::Quadratic { center, coef } => {
                write!(f, "Quadratic(center={center}, coef={coef})")
            }
            TestFunction::Custom { name, sup, .. } => write!(f, "Custom({name}, sup={sup})"),
        }
    }
}

impl<T: Real> TestFunction<T> {
    pub fn eval(&self, y: T) -> T {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Cap { knot, slope, floor } => {
                (*slope * (y - *knot)).min(T::zero()).max(*floor)
            }
            TestFunction::Well {
                center,
                depth,
                width,
            } => {
                let z = (y - *center) / *width;
                let half = T::from_f64(0.5).expect("literal");
                -*depth * (-(z * z * half)).exp_m1().neg()
            }
            TestFunction::Quadratic { center, coef } => -*coef * (y - *center) * (y - *center),
            TestFunction::Custom { f, .. } => f(y),
        }
    }

    /// `sup_y h(y)`.
    pub fn sup(&self) -> T {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Custom { sup, .. } => *sup,
            _ => T::zero(),
        }
    }

    /// `inf_y h(y)`, `-inf` when unbounded.
    pub fn inf(&self) -> T {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Cap { floor, .. } => *floor,
            TestFunction::Well { depth, .. } => -*depth,
            TestFunction::Quadratic { .. } | TestFunction::Custom { .. } => T::neg_infinity(),
        }
    }

    pub fn label(&self) -> String {
        format!("{self:?}")
    }
}
