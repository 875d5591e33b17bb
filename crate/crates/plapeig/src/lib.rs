//! Higher Dirichlet eigenpairs of the p-Laplacian on boxes.
//!
//! The operator is -Δ_p u = -div(|∇u|^{p-2} ∇u) with zero boundary data,
//! p > 1. First eigenpairs are easy: minimize the Rayleigh quotient
//! R[u] = ‖∇u‖_p^p / ‖u‖_p^p. This crate computes eigenpairs *beyond* the
//! first by an inverse-iteration scheme that keeps the iterate
//! sign-changing: split u into its nodal positive and negative parts,
//! feed them back through
//!
//! ```text
//! -Δ_p φ(α) = α (u₊/‖u‖_p)^{p-1} - β(α) (u₋/‖u‖_p)^{p-1},
//! ```
//!
//! and pick α so that the Rayleigh quotients of the two parts of φ agree.
//! The quotient R[u_k] then decreases monotonically toward a higher
//! eigenvalue, the balanced α converges to the fixed point of β, and the
//! norms of the unnormalized iterates encode the eigenvalue a second way,
//! which makes honest convergence checks cheap.
//!
//! The pieces:
//!
//! * [`mesh`]: criss-cross rectangle meshes and interval meshes, P1 only.
//! * [`quad`]: symmetric triangle and Gauss interval quadrature.
//! * [`fem`]: nodal functions, clipped parts, L^p and gradient norms,
//!   Rayleigh reports.
//! * [`linalg`]: banded symmetric positive definite Cholesky.
//! * [`ppoisson`]: regularized damped-Newton solver for -Δ_p v = f.
//! * [`balance`]: the α root-find over the sign-split right-hand side.
//! * [`driver`]: the outer iteration, traces, stop rules, diagnostics.
//! * [`eigen`]: discrete p = 2 eigenpairs for seeds and cross-checks.
//! * [`oracle`]: independent 1D reference values (closed-form eigenvalues
//!   and an ODE shooting method) plus a bounded non-convergent sequence
//!   useful for testing plateau detection.

pub mod balance;
pub mod driver;
pub mod eigen;
mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod ppoisson;
pub mod quad;

pub use error::{Error, Result};

pub use balance::{find_balanced_alpha, BalanceResult, BetaMap, RootConfig};
pub use driver::{
    initial_guess, run_algorithm_a, run_algorithm_a_with, validate_u0, InitialGuess, RunConfig,
    RunTrace, StopReason,
};
pub use fem::{rayleigh, FeFunction, RayleighReport};
pub use mesh::{build_interval_mesh, build_rect_mesh, build_rect_mesh_with, DiagonalPattern, Mesh};
pub use ppoisson::{solve_ppoisson, solve_signed_power_rhs, PPoissonConfig, SolveReport};
