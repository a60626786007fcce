//! Seed-to-solution solver for the Einstein constraint equations.
//!
//! Given "seed" initial data (g₁, h₁) and target constraint values (H⋆, M⋆) on
//! one asymptotically Euclidean end, this library produces a pair (g, h)
//! satisfying the Hamiltonian and momentum constraints
//!
//! ```text
//! H(g,h) = R_g + ½(Tr_g h)² − |h|²_g = H⋆,      M(g,h) = Div_g h = M⋆,
//! ```
//!
//! by Picard iteration on a variationally inverted linearized constraint
//! operator. Post-processing extracts the mass and momentum correctors (m̃, P̃),
//! effective seeds, and ADM charges, and an outer driver runs the
//! asymptotic-localization fixed point s⋆ = (4/5)·m̃(s⋆) that pushes the
//! solution toward prescribed model metrics inside/outside angular cones.
//!
//! Module map:
//! - [`grid`]: Cartesian truncation of the end, radius function, finite
//!   differences, weighted norms, decay-matched Robin closure, snapshots.
//! - [`operators`]: constraint operators, exact linearization, adjoints
//!   (continuous formulas and exact discrete transpose), Lie/Killing,
//!   quadratic remainder.
//! - [`elliptic`]: Poisson / critical-weight / momentum-system solvers,
//!   Green's kernel convolution, asymptotic coefficient extraction, decay fits.
//! - [`variational`]: exponent-class checks and the linearized solve through
//!   the normal equations of the adjoint functional J.
//! - [`iteration`]: the nonlinear Picard loop with contraction monitoring.
//! - [`asymptotics`]: correctors, ADM charges, effective seeds,
//!   derived-equation residuals, Schwarzschild gauge change.
//! - [`localization`]: angular profiles on S², parameterized seed families,
//!   the scalar fixed point, per-cone decay reports.
//! - [`seeds`]: seed-data constructors with certified exponent classes.

pub mod error;
pub mod grid;
pub mod operators;
pub mod elliptic;
pub mod variational;
pub mod iteration;
pub mod asymptotics;
pub mod localization;
pub mod seeds;

pub use error::{Error, Result};
