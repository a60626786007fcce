//! The linearized constraint operator dG at a background (g, h), built as the
//! exact chain-rule derivative of the *discrete* constraint map.
//!
//! The discrete G is a composition: ∂g → g⁻¹ → Γ → ∂Γ → Ric → R → (H, M).
//! dG differentiates that composition stage by stage with the identical
//! finite-difference stencils, so (G(x + εv) − G(x))/ε − dG v is a genuinely
//! quadratic remainder all the way down to rounding — no O(h²) mismatch
//! between the linearization and the nonlinear map.
//!
//! dG is assembled as a [`Pipeline`] of copy/pointwise/derivative atoms, so
//! its ℓ² transpose is exact and the variational normal operator
//! dG ∘ W ∘ dGᵀ is symmetric to machine precision.

use std::rc::Rc;

use crate::grid::{
    sym_index, sym_pair, sym_mult, GridSpec, ScalarField, SymTensorField, VectorField,
};

use super::geometry::MetricField;
use super::linop::{Pipeline, StageBuilder};

// Stage-C output layout (input of the pointwise assembly stage).
const C_DGINV: usize = 0; // 6: δ(g⁻¹)
const C_ETA: usize = 6; // 6: h₂
const C_DGAMMA: usize = 12; // 18: δΓ^k_(a), slot k*6 + a
const C_DETA: usize = 30; // 18: ∂_c h₂_(a), slot a*3 + c
const C_DDGSUM: usize = 48; // 6: Σ_k ∂_k δΓ^k_(a)
const C_DDT: usize = 54; // 6: ∂_j δT_i at the packed representative (i ≤ j)
const C_WIDTH: usize = 60;

/// dG at a fixed background, with packing helpers between tensor fields and
/// the flat stacks the pipeline works on.
#[derive(Debug, Clone)]
pub struct LinearizedConstraint {
    pub pipeline: Pipeline,
    spec: GridSpec,
}

fn fma2(dst: &mut ScalarField, c: f64, a: &ScalarField, b: &ScalarField) {
    for ((d, &x), &y) in dst.data.iter_mut().zip(&a.data).zip(&b.data) {
        *d += c * x * y;
    }
}

impl LinearizedConstraint {
    pub fn new(m: &MetricField, h: &SymTensorField) -> Self {
        let spec = m.spec();
        let len = spec.len();

        // ---- background pointwise caches -------------------------------
        let trh = m.trace(h);
        // hgh_{ik} = h_{ij} g^{jl} h_{lk}   (both indices low)
        // ghg^{ik} = g^{ij} h_{jl} g^{lk}   (both indices high)
        let mut hgh = SymTensorField::zeros(spec);
        let mut ghg = SymTensorField::zeros(spec);
        for idx in 0..len {
            let hm = h.mat_at(idx);
            let gi = m.ginv.mat_at(idx);
            for a in 0..6 {
                let (i, k) = sym_pair(a);
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for j in 0..3 {
                    for l in 0..3 {
                        s1 += hm[i][j] * gi[j][l] * hm[l][k];
                        s2 += gi[i][j] * hm[j][l] * gi[l][k];
                    }
                }
                hgh.comps[a].data[idx] = s1;
                ghg.comps[a].data[idx] = s2;
            }
        }
        let nabla_h = m.cov_deriv_sym(h);

        // C[l][a] = ½(∂g_{jl,i} + ∂g_{il,j} − ∂g_{ij,l})  (lowered Christoffel)
        let c_low: Vec<[ScalarField; 6]> = (0..3)
            .map(|l| {
                std::array::from_fn(|a| {
                    let (i, j) = sym_pair(a);
                    let mut f = ScalarField::zeros(spec);
                    f.axpy(0.5, &m.dg[sym_index(j, l)][i]);
                    f.axpy(0.5, &m.dg[sym_index(i, l)][j]);
                    f.axpy(-0.5, &m.dg[sym_index(i, j)][l]);
                    f
                })
            })
            .collect();
        let c_low: Vec<[Rc<ScalarField>; 6]> = c_low
            .into_iter()
            .map(|arr| arr.map(Rc::new))
            .collect();

        let half_ginv: [Rc<ScalarField>; 6] = std::array::from_fn(|a| {
            let mut f = m.ginv.comps[a].clone();
            f.scale(0.5);
            Rc::new(f)
        });

        // K[b][c]: δ(g⁻¹)_b = Σ_c K[b][c]·γ_c with
        // δg^{ab} = −g^{ap} γ_{pq} g^{qb}
        let mut k_coef: Vec<Vec<Rc<ScalarField>>> = Vec::with_capacity(6);
        for b in 0..6 {
            let (p_out, q_out) = sym_pair(b);
            let mut row = Vec::with_capacity(6);
            for c in 0..6 {
                let (p, q) = sym_pair(c);
                let mut f = ScalarField::zeros(spec);
                for idx in 0..len {
                    let gi = m.ginv.mat_at(idx);
                    let mut v = gi[p_out][p] * gi[q][q_out];
                    if p != q {
                        v += gi[p_out][q] * gi[p][q_out];
                    }
                    f.data[idx] = -v;
                }
                row.push(Rc::new(f));
            }
            k_coef.push(row);
        }

        // ---- stage A: derivatives of the perturbation ------------------
        // in: γ(6), η(6); out: γ(6), η(6), ∂γ(18), ∂η(18)
        let mut sa = StageBuilder::new(12);
        for s in 0..12 {
            let o = sa.slot();
            sa.copy(o, s);
        }
        for a in 0..6 {
            for axis in 0..3 {
                let o = sa.slot();
                sa.deriv(o, a, axis);
            }
        }
        for a in 0..6 {
            for axis in 0..3 {
                let o = sa.slot();
                sa.deriv(o, 6 + a, axis);
            }
        }
        let stage_a = sa.build();
        let a_dgamma = |a: usize, c: usize| 12 + a * 3 + c; // ∂_c γ_(a)
        let a_deta = |a: usize, c: usize| 30 + a * 3 + c;

        // ---- stage B: δ(g⁻¹) -------------------------------------------
        // in (48): γ, η, ∂γ, ∂η; out (48): δg⁻¹(6), η(6), ∂γ(18), ∂η(18)
        let mut sb = StageBuilder::new(48);
        for b in 0..6 {
            let o = sb.slot();
            for c in 0..6 {
                sb.axpy_field(o, c, k_coef[b][c].clone());
            }
        }
        for s in 6..48 {
            let o = sb.slot();
            sb.copy(o, s);
        }
        let stage_b = sb.build();
        let b_dginv = |b: usize| b;
        let b_dgamma_in = a_dgamma; // same offsets survive the pass-through
        let b_deta_in = a_deta;

        // ---- stage B2: δΓ and its trace --------------------------------
        // in (48); out (51): δg⁻¹(6), η(6), δΓ(18), δT(3), ∂η(18)
        let mut s2 = StageBuilder::new(48);
        for s in 0..12 {
            let o = s2.slot();
            s2.copy(o, s);
        }
        // δΓ^k_(a) = Σ_l δg^{kl} C[l][a]
        //          + ½ g^{kl} (∂_i γ_{jl} + ∂_j γ_{il} − ∂_l γ_{ij})
        let emit_dgamma = |s2: &mut StageBuilder, o: usize, k: usize, a: usize| {
            let (i, j) = sym_pair(a);
            for l in 0..3 {
                s2.axpy_field(o, b_dginv(sym_index(k, l)), c_low[l][a].clone());
                let hg = half_ginv[sym_index(k, l)].clone();
                s2.axpy_field(o, b_dgamma_in(sym_index(j, l), i), hg.clone());
                s2.axpy_field(o, b_dgamma_in(sym_index(i, l), j), hg.clone());
                let mut neg = (*hg).clone();
                neg.scale(-1.0);
                s2.axpy_field(o, b_dgamma_in(sym_index(i, j), l), Rc::new(neg));
            }
        };
        for k in 0..3 {
            for a in 0..6 {
                let o = s2.slot();
                emit_dgamma(&mut s2, o, k, a);
            }
        }
        // δT_i = Σ_k δΓ^k_{(k,i)} (re-emit the same atoms, summed over k)
        for i in 0..3 {
            let o = s2.slot();
            for k in 0..3 {
                emit_dgamma(&mut s2, o, k, sym_index(k, i));
            }
        }
        for a in 0..6 {
            for c in 0..3 {
                let o = s2.slot();
                s2.copy(o, b_deta_in(a, c));
            }
        }
        let stage_b2 = s2.build();
        let b2_dgamma = |k: usize, a: usize| 12 + k * 6 + a;
        let b2_dt = |i: usize| 30 + i;
        let b2_deta = |a: usize, c: usize| 33 + a * 3 + c;

        // ---- stage C: derivatives of δΓ --------------------------------
        // in (51); out (60): layout in the C_* constants
        let mut sc = StageBuilder::new(51);
        for s in 0..12 {
            let o = sc.slot();
            sc.copy(o, s);
        }
        for k in 0..3 {
            for a in 0..6 {
                let o = sc.slot();
                sc.copy(o, b2_dgamma(k, a));
            }
        }
        for a in 0..6 {
            for c in 0..3 {
                let o = sc.slot();
                sc.copy(o, b2_deta(a, c));
            }
        }
        for a in 0..6 {
            let o = sc.slot();
            debug_assert_eq!(o, C_DDGSUM + a);
            for k in 0..3 {
                sc.deriv(o, b2_dgamma(k, a), k);
            }
        }
        for a in 0..6 {
            let (i, j) = sym_pair(a);
            let o = sc.slot();
            debug_assert_eq!(o, C_DDT + a);
            sc.deriv(o, b2_dt(i), j);
        }
        let stage_c = sc.build();

        // ---- stage D: pointwise assembly of (δH, δM) -------------------
        let mut coef_h: Vec<ScalarField> = (0..C_WIDTH).map(|_| ScalarField::zeros(spec)).collect();
        let mut coef_m: Vec<Vec<ScalarField>> = (0..3)
            .map(|_| (0..C_WIDTH).map(|_| ScalarField::zeros(spec)).collect())
            .collect();

        // δH = δR + (Tr h)·δ(Tr h) − δ|h|², with
        //   δR = Σ_a m_a [δg⁻¹_a Ric_a + g⁻¹_a δRic_a]
        //   δ(Tr h) = Σ_a m_a [δg⁻¹_a h_a + g⁻¹_a η_a]
        //   δ|h|² = 2 Σ_a m_a [δg⁻¹_a (h g⁻¹ h)_a + (g⁻¹ h g⁻¹)_a η_a]
        for a in 0..6 {
            let mu = sym_mult(a);
            coef_h[C_DGINV + a].axpy(mu, &m.ric.comps[a]);
            fma2(&mut coef_h[C_DGINV + a], mu, &trh, &h.comps[a]);
            coef_h[C_DGINV + a].axpy(-2.0 * mu, &hgh.comps[a]);
            fma2(&mut coef_h[C_ETA + a], mu, &trh, &m.ginv.comps[a]);
            coef_h[C_ETA + a].axpy(-2.0 * mu, &ghg.comps[a]);
            coef_h[C_DDGSUM + a].axpy(mu, &m.ginv.comps[a]);
            coef_h[C_DDT + a].axpy(-mu, &m.ginv.comps[a]);
        }
        // δRic Γ·δΓ terms, traced against m_a g⁻¹_a:
        //   δRic_(a) ⊃ δΓ^k_{(k,l)} Γ^l_(a) + Γ^k_{(k,l)} δΓ^l_(a)
        //            − δΓ^k_{(j,l)} Γ^l_{(k,i)} − Γ^k_{(j,l)} δΓ^l_{(k,i)}
        for a in 0..6 {
            let (i, j) = sym_pair(a);
            let mu = sym_mult(a);
            for k in 0..3 {
                for l in 0..3 {
                    fma2(
                        &mut coef_h[C_DGAMMA + k * 6 + sym_index(k, l)],
                        mu,
                        &m.ginv.comps[a],
                        &m.gamma[l][a],
                    );
                    fma2(
                        &mut coef_h[C_DGAMMA + l * 6 + a],
                        mu,
                        &m.ginv.comps[a],
                        &m.gamma[k][sym_index(k, l)],
                    );
                    fma2(
                        &mut coef_h[C_DGAMMA + k * 6 + sym_index(j, l)],
                        -mu,
                        &m.ginv.comps[a],
                        &m.gamma[l][sym_index(k, i)],
                    );
                    fma2(
                        &mut coef_h[C_DGAMMA + l * 6 + sym_index(k, i)],
                        -mu,
                        &m.ginv.comps[a],
                        &m.gamma[k][sym_index(j, l)],
                    );
                }
            }
        }

        // δM_j = δg^{ik} ∇_k h_{ij}
        //      + g^{ik} (∂_k η_{ij} − δΓ^m_{ki} h_{mj} − Γ^m_{ki} η_{mj}
        //                          − δΓ^m_{kj} h_{im} − Γ^m_{kj} η_{im})
        for j in 0..3 {
            for i in 0..3 {
                for k in 0..3 {
                    coef_m[j][C_DGINV + sym_index(i, k)]
                        .axpy(1.0, &nabla_h[k][sym_index(i, j)]);
                    coef_m[j][C_DETA + sym_index(i, j) * 3 + k]
                        .axpy(1.0, &m.ginv.comps[sym_index(i, k)]);
                    for mm in 0..3 {
                        let gik = &m.ginv.comps[sym_index(i, k)];
                        fma2(
                            &mut coef_m[j][C_DGAMMA + mm * 6 + sym_index(k, i)],
                            -1.0,
                            gik,
                            &h.comps[sym_index(mm, j)],
                        );
                        fma2(
                            &mut coef_m[j][C_DGAMMA + mm * 6 + sym_index(k, j)],
                            -1.0,
                            gik,
                            &h.comps[sym_index(i, mm)],
                        );
                        fma2(
                            &mut coef_m[j][C_ETA + sym_index(mm, j)],
                            -1.0,
                            gik,
                            &m.gamma[mm][sym_index(k, i)],
                        );
                        fma2(
                            &mut coef_m[j][C_ETA + sym_index(i, mm)],
                            -1.0,
                            gik,
                            &m.gamma[mm][sym_index(k, j)],
                        );
                    }
                }
            }
        }

        let mut sd = StageBuilder::new(C_WIDTH);
        let out_h = sd.slot();
        let out_m: [usize; 3] = std::array::from_fn(|_| sd.slot());
        for (slot, f) in coef_h.into_iter().enumerate() {
            if f.max_abs() > 0.0 {
                sd.axpy_field(out_h, slot, Rc::new(f));
            }
        }
        for j in 0..3 {
            for (slot, f) in std::mem::take(&mut coef_m[j]).into_iter().enumerate() {
                if f.max_abs() > 0.0 {
                    sd.axpy_field(out_m[j], slot, Rc::new(f));
                }
            }
        }
        let stage_d = sd.build();

        let pipeline =
            Pipeline::new(spec, vec![stage_a, stage_b, stage_b2, stage_c, stage_d]);
        LinearizedConstraint { pipeline, spec }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Pack a metric/extrinsic perturbation into the 12-field input stack.
    pub fn pack_input(g2: &SymTensorField, h2: &SymTensorField) -> Vec<ScalarField> {
        g2.comps.iter().chain(h2.comps.iter()).cloned().collect()
    }

    pub fn unpack_input(mut v: Vec<ScalarField>) -> (SymTensorField, SymTensorField) {
        assert_eq!(v.len(), 12);
        let h2 = v.split_off(6);
        let mut it_g = v.into_iter();
        let mut it_h = h2.into_iter();
        (
            SymTensorField { comps: std::array::from_fn(|_| it_g.next().unwrap()) },
            SymTensorField { comps: std::array::from_fn(|_| it_h.next().unwrap()) },
        )
    }

    /// Pack a (scalar, vector) pair into the 4-field output stack.
    pub fn pack_output(u: &ScalarField, z: &VectorField) -> Vec<ScalarField> {
        std::iter::once(u.clone()).chain(z.comps.iter().cloned()).collect()
    }

    pub fn unpack_output(mut v: Vec<ScalarField>) -> (ScalarField, VectorField) {
        assert_eq!(v.len(), 4);
        let z = v.split_off(1);
        let mut it = z.into_iter();
        (
            v.pop().unwrap(),
            VectorField { comps: std::array::from_fn(|_| it.next().unwrap()) },
        )
    }

    /// dG[g₂, h₂] = (δH, δM).
    pub fn apply(&self, g2: &SymTensorField, h2: &SymTensorField) -> (ScalarField, VectorField) {
        let out = self.pipeline.apply(&Self::pack_input(g2, h2));
        Self::unpack_output(out)
    }

    /// Exact ℓ² transpose dGᵀ[u, Z] = (γ*, η*).
    pub fn apply_transpose(
        &self,
        u: &ScalarField,
        z: &VectorField,
    ) -> (SymTensorField, SymTensorField) {
        let out = self.pipeline.apply_transpose(&Self::pack_output(u, z));
        Self::unpack_input(out)
    }
}
