//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while evaluating a twist map or its derivatives.
#[derive(Debug, Clone, Error)]
pub enum MapError {
    /// The inner Newton iteration on the twist relation failed. This usually
    /// signals that the generating function violates the twist/positivity
    /// condition at the requested point.
    #[error("twist relation solve did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },
    /// The mixed derivative block of the generating function is numerically
    /// singular, violating strong positivity.
    #[error("mixed second-derivative block is numerically singular")]
    SingularTwistBlock,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("phase point has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
}

/// Errors raised by the discrete variational solvers.
#[derive(Debug, Clone, Error)]
pub enum ActionError {
    #[error("minimization did not converge after {starts} starts (best gradient norm {grad_norm:.3e})")]
    NonConvergence { starts: usize, grad_norm: f64 },
    #[error("configuration path needs at least two points")]
    PathTooShort,
    #[error("path endpoints violate the declared boundary condition")]
    BoundaryMismatch,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Errors raised by periodic-orbit and torus routines.
#[derive(Debug, Clone, Error)]
pub enum TorusError {
    #[error("periodic solve did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("local twist lost along continuation: |det| = {det:.3e} at epsilon = {epsilon}")]
    LocalTwistLoss { det: f64, epsilon: f64 },
    #[error("starting graph violates the radial equation (residual {residual:.3e})")]
    SeedResidual { residual: f64 },
    #[error("orbit residual {residual:.3e} too large for a monodromy report")]
    OrbitResidual { residual: f64 },
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Errors raised by the arithmetic and rigidity analysis.
#[derive(Debug, Clone, Error)]
pub enum RigidityError {
    #[error("rational basis matrix is singular")]
    DegenerateBasis,
    #[error("interval ({a}, {b}) is not of the form 0 < a < b")]
    BadInterval { a: String, b: String },
    #[error("potential has vanishing Hessian; no breakdown threshold exists")]
    ConstantPotential,
    #[error("map has no finite rate bound; breakdown threshold undefined")]
    NoRateBound,
    #[error("family carries no potential")]
    MissingPotential,
    #[error("lattice enumeration exceeds budget ({candidates} candidates)")]
    EnumerationBudget { candidates: u128 },
}

/// Errors raised when constructing rotation vectors.
#[derive(Debug, Clone, Error)]
pub enum RotationError {
    #[error("m = {m:?} and n = {n} are not coprime (gcd {gcd})")]
    NotCoprime { m: Vec<i64>, n: i64, gcd: i64 },
    #[error("period n must be a positive integer")]
    NonPositivePeriod,
    #[error("rotation vector must not be empty")]
    EmptyVector,
}
