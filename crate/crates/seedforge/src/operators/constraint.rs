//! The constraint operator G(g, h) = (H, M) with
//! H = R_g + ½(Tr_g h)² − |h|²_g and M = Div_g h.

use crate::error::Result;
use crate::grid::{ScalarField, SymTensorField, VectorField};

use super::geometry::{geometry, MetricField};

/// Hamiltonian constraint H(g, h) = R_g + ½(Tr_g h)² − |h|²_g.
pub fn hamiltonian(m: &MetricField, h: &SymTensorField) -> ScalarField {
    let tr = m.trace(h);
    let hh = m.inner_sym(h, h);
    let mut out = m.scal.clone();
    for idx in 0..out.data.len() {
        out.data[idx] += 0.5 * tr.data[idx] * tr.data[idx] - hh.data[idx];
    }
    out
}

/// Momentum constraint M(g, h)_j = (Div_g h)_j = g^{ik} ∇_k h_{ij}.
pub fn momentum(m: &MetricField, h: &SymTensorField) -> VectorField {
    m.divergence_sym(h)
}

/// Full constraint map G(g, h) = (H, M), building geometry caches from `g`.
pub fn constraint(g: SymTensorField, h: &SymTensorField) -> Result<(ScalarField, VectorField)> {
    let m = geometry(g)?;
    Ok(constraint_with(&m, h))
}

/// Constraint map on precomputed geometry.
pub fn constraint_with(m: &MetricField, h: &SymTensorField) -> (ScalarField, VectorField) {
    (hamiltonian(m, h), momentum(m, h))
}
