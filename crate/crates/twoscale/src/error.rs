use thiserror::Error;

/// Broad classes of failure, used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Unknown names, malformed parameters.
    Config,
    /// Inputs outside the mathematical domain of an operation.
    Domain,
    /// A solver ran out of budget or hit a numerical breakdown.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alpha must be greater than 1, got {0}")]
    InvalidAlpha(f64),
    #[error("dimension mismatch in {what}: {detail}")]
    DimensionMismatch { what: &'static str, detail: String },
    #[error("coefficient is not 1-periodic in y: defect {defect:e} exceeds 1e-10")]
    PeriodicityViolation { defect: f64 },
    #[error("diffusion tau tau^T is not elliptic enough: ratio {ratio:e} < theta {theta:e}")]
    EllipticityViolation { ratio: f64, theta: f64 },
    #[error("unknown catalog model `{0}`")]
    UnknownModel(String),
    #[error("bad parameter `{name}`: {reason}")]
    BadParameter { name: String, reason: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("density has a node value {min:e} below the tolerance")]
    NegativeDensity { min: f64 },
    #[error("principal eigenfunction is not positive (min {min:e})")]
    NonPositiveEigenfunction { min: f64 },
    #[error("discounted value {value:e} exceeds the a priori bound {bound:e}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("extrapolated effective Hamiltonian is negative: {0:e}")]
    NegativeHbar(f64),
    #[error("coefficient evaluation failed: {0}")]
    CoefficientError(String),
    #[error("Hamiltonian is not coercive on the search box: {0}")]
    NotCoercive(String),
    #[error("operation requires a model whose sigma does not depend on x")]
    NotXIndependent,
    #[error("explicit scheme lost monotonicity: {0}")]
    UnstableStep(String),
    #[error("time step {dt:e} exceeds the fast-scale cap {cap:e}")]
    StepTooLarge { dt: f64, cap: f64 },
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("no hits at eps = {eps}")]
    ZeroHits { eps: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("option is not out of the money")]
    NotOtm,
    #[error("rate infimum {0:e} is not positive")]
    DegenerateRate(f64),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("price {price:e} is outside the no-arbitrage interval [{lower:e}, {upper:e})")]
    OutOfBounds { price: f64, lower: f64, upper: f64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            UnknownModel(_) | BadParameter { .. } => ErrorClass::Config,
            NoConvergence { .. }
            | NegativeDensity { .. }
            | NonPositiveEigenfunction { .. }
            | BoundViolation { .. }
            | NegativeHbar(_)
            | UnstableStep(_)
            | NonFinite(_)
            | NotCoercive(_)
            | DegenerateRate(_) => ErrorClass::Numerical,
            _ => ErrorClass::Domain,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
