//! Geometric operators: metric geometry caches, the constraint map G = (H, M),
//! its exact discrete linearization dG with transpose, the continuous formal
//! adjoint dG*, Lie derivatives, and the quadratic remainder Q.

pub mod adjoint;
pub mod constraint;
pub mod geometry;
pub mod lie;
pub mod linearized;
pub mod linop;
pub mod quadratic;

pub use adjoint::{adjoint, scalar_adjoint, vector_adjoint};
pub use constraint::{constraint, constraint_with, hamiltonian, momentum};
pub use geometry::{geometry, sym_eigenvalues, MetricField};
pub use lie::{killing_operator, lie_metric, lie_sym};
pub use linearized::LinearizedConstraint;
pub use linop::{Pipeline, Stage, StageBuilder};
pub use quadratic::quadratic_remainder;
