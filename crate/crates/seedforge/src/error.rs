//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains a non-finite value at linear index {index}")]
    NonFinite { index: usize },

    #[error("metric not positive definite at grid point ({i},{j},{k}): min eigenvalue {eig}")]
    NotPositiveDefinite { i: usize, j: usize, k: usize, eig: f64 },

    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:.3e}); history tail: {tail:?}")]
    CgNoConvergence { iters: usize, residual: f64, tail: Vec<f64> },

    #[error("negative curvature encountered in CG (p·Ap = {curvature:.3e}); the operator is not positive — likely a discretization or adjoint bug")]
    CgIndefinite { curvature: f64 },

    #[error("Picard iteration diverged: contraction ratio exceeded 1 for 3 consecutive steps; ratio history {history:?}")]
    PicardDivergence { history: Vec<f64> },

    #[error("seed data violates a tame bound: {0}")]
    TameBound(String),

    #[error("derivative order {0} exceeds the supported maximum of 4")]
    DerivativeOrder(usize),

    #[error("source support (radius {support:.2}) exceeds half the domain radius {limit:.2}")]
    SupportTooLarge { support: f64, limit: f64 },

    #[error("field vanishes on the requested fit shells")]
    EmptyShells,

    #[error("fit shells unavailable: {0}")]
    ShellsUnavailable(String),

    #[error("angular profile construction failed: {0}")]
    ProfileConstruction(String),

    #[error("fixed-point bracketing failed: F(s) - s has no sign change on the interval [{lo:.3}, {hi:.3}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
