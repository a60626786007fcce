//! Quadratic remainder Q of the constraint map around a background:
//! Q(g₂, h₂) = G(g₁ + g₂, h₁ + h₂) − G(g₁, h₁) − dG[g₂, h₂].
//!
//! Because dG is the exact derivative of the discrete G, Q is genuinely
//! second order in the perturbation on the grid, which is what the Picard
//! iteration's contraction estimates rely on.

use crate::error::Result;
use crate::grid::{ScalarField, SymTensorField, VectorField};

use super::constraint::{constraint, constraint_with};
use super::geometry::MetricField;
use super::linearized::LinearizedConstraint;

/// Evaluate Q at a precomputed background. Fails if the perturbed metric
/// g₁ + g₂ leaves the positive cone.
pub fn quadratic_remainder(
    m: &MetricField,
    h1: &SymTensorField,
    lin: &LinearizedConstraint,
    g2: &SymTensorField,
    h2: &SymTensorField,
) -> Result<(ScalarField, VectorField)> {
    let mut gp = m.g.clone();
    gp.axpy(1.0, g2);
    let mut hp = h1.clone();
    hp.axpy(1.0, h2);
    let (h_full, m_full) = constraint(gp, &hp)?;
    let (h_base, m_base) = constraint_with(m, h1);
    let (dh, dm) = lin.apply(g2, h2);
    let mut q_h = h_full;
    q_h.axpy(-1.0, &h_base);
    q_h.axpy(-1.0, &dh);
    let mut q_m = m_full;
    q_m.axpy(-1.0, &m_base);
    q_m.axpy(-1.0, &dm);
    Ok((q_h, q_m))
}
