//! Exponent-class validation and the variational linearized solve: given a
//! source (f, V), produce the minimizer (u, Z) of the quadratic functional J
//! and the corrections (g₂, h₂) through the weighted normal equations.

pub mod exponents;
pub mod precond;
pub mod seed;
pub mod solve;

pub use exponents::{check_exponents, ExponentClass, ExponentReport, ExponentSet};
pub use precond::SpectralPrecond;
pub use seed::{SeedData, TameNorms};
pub use solve::{
    evaluate_j, solve_linearized, solve_linearized_with, LinearizedSolveResult, NormalOperator,
    VAR_CG_TOL,
};
