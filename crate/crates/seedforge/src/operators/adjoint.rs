//! Continuous formal adjoint dG* of the linearized constraint operator,
//! obtained by integration by parts with respect to the background volume
//! form.
//!
//! Pairings: the scalar slot pairs as ∫ dH·u dV, the vector slot as the
//! natural contraction ∫ dM_j Z^j dV (Z contravariant), and the outputs pair
//! against (g₂, h₂) via the g-inner product on symmetric 2-tensors. With
//! those conventions,
//!
//!   g₂-slot: −(Δu)g + ∇²u − u·Ric + u(−(Tr h)h + 2(h ×_g h))
//!            + ½(h_{aj}∇_b Z^j + h_{bj}∇_a Z^j) + ½(Div Z)h − ½ Div(hZ)·g
//!   h₂-slot: u((Tr h)g − 2h) − ½ L_Z g
//!
//! where (h ×_g h)_{ab} = h_{aj}g^{jl}h_{lb} and (hZ)^l = g^{lm}h_{mj}Z^j.
//! The h = 0, Z = 0 special case is the classical L*u = −(Δu)g + ∇²u − u·Ric,
//! and the u = 0, h = 0 case is M*Z = −½ L_Z g.

use crate::grid::{sym_index, sym_pair, ScalarField, SymTensorField, VectorField};

use super::geometry::MetricField;

/// L*_g u = −(Δ_g u) g + ∇²u − u·Ric (the scalar-slot adjoint at h = 0).
pub fn scalar_adjoint(m: &MetricField, u: &ScalarField) -> SymTensorField {
    let spec = m.spec();
    let hess = m.hessian(u);
    let lap = m.trace(&hess);
    let mut out = SymTensorField::zeros(spec);
    for a in 0..6 {
        for idx in 0..spec.len() {
            out.comps[a].data[idx] = hess.comps[a].data[idx]
                - lap.data[idx] * m.g.comps[a].data[idx]
                - u.data[idx] * m.ric.comps[a].data[idx];
        }
    }
    out
}

/// M*_g Z = −½ L_Z g (the vector-slot adjoint), as a covariant tensor:
/// −½(g_{bj}∇_a Z^j + g_{aj}∇_b Z^j).
pub fn vector_adjoint(m: &MetricField, z: &VectorField) -> SymTensorField {
    let spec = m.spec();
    let nabla = m.cov_deriv_vec(z);
    let mut out = SymTensorField::zeros(spec);
    for a in 0..6 {
        let (p, q) = sym_pair(a);
        for idx in 0..spec.len() {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += m.g.comps[sym_index(q, j)].data[idx] * nabla[p][j].data[idx]
                    + m.g.comps[sym_index(p, j)].data[idx] * nabla[q][j].data[idx];
            }
            out.comps[a].data[idx] = -0.5 * acc;
        }
    }
    out
}

/// Full continuous adjoint dG*[u, Z] = (g₂-slot, h₂-slot) at background
/// (m, h).
pub fn adjoint(
    m: &MetricField,
    h: &SymTensorField,
    u: &ScalarField,
    z: &VectorField,
) -> (SymTensorField, SymTensorField) {
    let spec = m.spec();
    let len = spec.len();
    let trh = m.trace(h);
    let nabla_z = m.cov_deriv_vec(z);
    let mut div_z = ScalarField::zeros(spec);
    for j in 0..3 {
        div_z.axpy(1.0, &nabla_z[j][j]);
    }
    // (hZ)^l = g^{lm} h_{mj} Z^j and its covariant divergence
    let mut hz = VectorField::zeros(spec);
    for idx in 0..len {
        let gi = m.ginv.mat_at(idx);
        let hm = h.mat_at(idx);
        for l in 0..3 {
            let mut acc = 0.0;
            for mm in 0..3 {
                for j in 0..3 {
                    acc += gi[l][mm] * hm[mm][j] * z.comps[j].data[idx];
                }
            }
            hz.comps[l].data[idx] = acc;
        }
    }
    let div_hz = m.div_vec(&hz);

    let mut g_slot = scalar_adjoint(m, u);
    for a in 0..6 {
        let (p, q) = sym_pair(a);
        for idx in 0..len {
            let hm = h.mat_at(idx);
            let gi = m.ginv.mat_at(idx);
            // u(−(Tr h)h + 2 h ×_g h)
            let mut hxh = 0.0;
            for j in 0..3 {
                for l in 0..3 {
                    hxh += hm[p][j] * gi[j][l] * hm[l][q];
                }
            }
            let mut v = u.data[idx]
                * (-trh.data[idx] * h.comps[a].data[idx] + 2.0 * hxh);
            // ½(h_{pj}∇_q Z^j + h_{qj}∇_p Z^j) + ½(Div Z)h_{pq} − ½Div(hZ)g_{pq}
            let mut sym = 0.0;
            for j in 0..3 {
                sym += hm[p][j] * nabla_z[q][j].data[idx] + hm[q][j] * nabla_z[p][j].data[idx];
            }
            v += 0.5 * sym + 0.5 * div_z.data[idx] * h.comps[a].data[idx]
                - 0.5 * div_hz.data[idx] * m.g.comps[a].data[idx];
            g_slot.comps[a].data[idx] += v;
        }
    }

    let mut h_slot = vector_adjoint(m, z);
    for a in 0..6 {
        for idx in 0..len {
            h_slot.comps[a].data[idx] += u.data[idx]
                * (trh.data[idx] * m.g.comps[a].data[idx] - 2.0 * h.comps[a].data[idx]);
        }
    }
    (g_slot, h_slot)
}
