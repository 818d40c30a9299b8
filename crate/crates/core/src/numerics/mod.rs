//! Dense linear algebra, fixed-step integration, and the Riccati/Lyapunov
//! machinery used for controller design and stability audits.

mod eigen;
mod mat;
mod ode;
mod riccati;

pub use eigen::{check_hyperbolic, eig_real_parts, eigenvalues, is_hurwitz, sym_eigenvalues, HYPERBOLIC_TOL};
pub use mat::{dot, norm2, Cholesky, Lu, Mat};
pub use ode::{rk4_step, OdeState};
pub use riccati::{
    care_residual, care_solve, lqr_gain, lyapunov_residual, lyapunov_solve, ultimate_bound, CARE_RESIDUAL_TOL,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: String, residual: f64 },
    #[error("integration failed at t = {t}: non-finite derivative near x = {x:?}")]
    IntegrationFailure { t: f64, x: Vec<f64> },
}
