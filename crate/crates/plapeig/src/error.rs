use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the solver stack.
///
/// Numerical near-misses (tiny monotonicity violations, balance residuals a
/// hair above tolerance) are *not* errors; they are recorded as invariant
/// violations on the run trace. An `Error` means a result could not be
/// produced at all.
#[derive(Debug, Error)]
pub enum Error {
    #[error("exponent p must lie in (1, inf), got {0}")]
    InvalidExponent(f64),

    #[error("invalid mesh spec: {0}")]
    InvalidMeshSpec(String),

    #[error("mesh has no interior nodes")]
    DegenerateMesh,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cannot normalize a function with zero norm")]
    ZeroFunction,

    #[error("Newton did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    NonConvergence { iterations: u32, residual: f64 },

    #[error("matrix not positive definite (pivot {pivot})")]
    NotSpd { pivot: usize },

    #[error("balance residual has no sign change after {fevals} solves: {detail}")]
    NoSignChange { fevals: u32, detail: String },

    #[error("initial guess is not sign-changing: |u+|_p = {plus_norm:.3e}, |u-|_p = {minus_norm:.3e}")]
    NotSignChanging { plus_norm: f64, minus_norm: f64 },

    #[error("unknown or unsupported initial guess: {0}")]
    UnknownGuess(String),

    #[error("trace has {len} states, diagnostics need at least 3")]
    TraceTooShort { len: usize },

    #[error("shooting failed to bracket the eigenvalue below lambda = {lambda_hi:.3e}")]
    NonBracketed { lambda_hi: f64 },

    #[error("internal error: {0}")]
    Internal(String),
}
