//! Effective Lagrangian, rate functions and the limit Hamilton–Jacobi equation.

mod duality;
mod legendre;
mod path;
mod pde;
mod test_fn;

pub use duality::{default_family, rate_from_duality_check, DualityReport};
pub use legendre::{legendre, EffectiveLagrangian, LegendrePoint};
pub use path::{growth_bounds, rate_general, rate_x_independent, RateFunctionResult, RateOptions};
pub use pde::{hopf_lax, solve_effective_pde, LineField, LineGrid};
pub use test_fn::TestFunction;
