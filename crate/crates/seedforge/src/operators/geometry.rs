//! Pointwise 3×3 algebra and the differential-geometry caches of a metric:
//! inverse, Christoffel symbols, Ricci and scalar curvature, and covariant
//! derivative closures.
//!
//! Second derivatives follow one convention everywhere: a same-axis pair
//! ∂²_c uses the compact 3-point stencil, a mixed pair ∂_{c₁}∂_{c₂} composes
//! the centered first-derivative stencil (the two axis applications commute
//! exactly). The compact choice matters: the composed stencil decouples even
//! and odd points, and the resulting near-null checkerboard cluster makes the
//! variationally inverted normal operator nearly singular near the faces. To
//! expose the pure second derivatives of the metric, the Ricci tensor is
//! assembled from the expanded form
//!
//!   Ric_{ij} = ½ g^{kl}(∂ₖ∂ᵢg_{jl} + ∂ₖ∂ⱼg_{il} − ∂ₖ∂ₗg_{ij} − ∂ᵢ∂ⱼg_{kl})
//!            + (∂ₖ g^{kl}) C_{l,ij} − ½ (∂ⱼ g^{kl})(∂ᵢ g_{kl})
//!            + Γ^k_{kl} Γ^l_{ij} − Γ^k_{jl} Γ^l_{ki}
//!
//! with C_{l,ij} the lowered Christoffel symbol and ∂ g⁻¹ := −g⁻¹(∂g)g⁻¹
//! evaluated pointwise from the cached first derivatives (so the i ↔ j
//! symmetry of every term is exact, not just up to truncation).

use crate::error::{Error, Result};
use crate::grid::{AxisOp, GridSpec, ScalarField, SymTensorField, VectorField, sym_index, sym_pair};

/// Eigenvalues of a symmetric 3×3 matrix, ascending (analytic trigonometric
/// method, stable for the nearly-Euclidean metrics we handle).
pub fn sym_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(f64::total_cmp);
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = m;
    for i in 0..3 {
        b[i][i] -= q;
    }
    let detb = det3(b);
    let r = (detb / 2.0) / (p * p * p);
    let r = r.clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(f64::total_cmp);
    e
}

#[inline]
pub fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[inline]
pub fn inv3(m: [[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let c = 1.0 / det;
    [
        [
            c * (m[1][1] * m[2][2] - m[1][2] * m[2][1]),
            c * (m[0][2] * m[2][1] - m[0][1] * m[2][2]),
            c * (m[0][1] * m[1][2] - m[0][2] * m[1][1]),
        ],
        [
            c * (m[1][2] * m[2][0] - m[1][0] * m[2][2]),
            c * (m[0][0] * m[2][2] - m[0][2] * m[2][0]),
            c * (m[0][2] * m[1][0] - m[0][0] * m[1][2]),
        ],
        [
            c * (m[1][0] * m[2][1] - m[1][1] * m[2][0]),
            c * (m[0][1] * m[2][0] - m[0][0] * m[2][1]),
            c * (m[0][0] * m[1][1] - m[0][1] * m[1][0]),
        ],
    ]
}

/// Minimum eigenvalue below which a metric is rejected as degenerate.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// A Riemannian metric with its cached geometry.
///
/// Cached fields: ∂g (first derivatives of all components), the inverse and
/// determinant, Christoffel symbols Γ^k_{ij}, Ricci tensor, and scalar
/// curvature. The caches are exactly the intermediates of the constraint
/// operator pipeline, so the linearized operator can be the literal chain-rule
/// derivative of the discrete composition.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub g: SymTensorField,
    /// g^{ij}, packed symmetric.
    pub ginv: SymTensorField,
    pub det: ScalarField,
    pub sqrt_det: ScalarField,
    /// dg[a][c] = ∂_c g_(a) with a the packed component.
    pub dg: Vec<[ScalarField; 3]>,
    /// dd[a][p] = ∂_{c₁}∂_{c₂} g_(a) with p = packed (c₁,c₂); same-axis pairs
    /// use the compact stencil, mixed pairs compose the centered stencil.
    pub dd: Vec<[ScalarField; 6]>,
    /// dginv[b][c] = ∂_c g^(b) = −(g⁻¹ ∂_c g g⁻¹)_(b), pointwise chain rule.
    pub dginv: Vec<[ScalarField; 3]>,
    /// gamma[k][a] = Γ^k_(a) with a = packed (i,j).
    pub gamma: Vec<[ScalarField; 6]>,
    pub ric: SymTensorField,
    /// Scalar curvature R_g.
    pub scal: ScalarField,
}

/// First derivatives of every packed component via the centered stencil.
fn d_all(t: &SymTensorField) -> Vec<[ScalarField; 3]> {
    let spec = t.spec();
    let d1 = AxisOp::d1(spec.n, spec.h());
    t.comps
        .iter()
        .map(|c| std::array::from_fn(|axis| d1.apply_axis(c, axis)))
        .collect()
}

/// Second derivatives of every packed component; `dt` holds the cached first
/// derivatives so mixed pairs reuse them.
fn dd_all(t: &SymTensorField, dt: &[[ScalarField; 3]]) -> Vec<[ScalarField; 6]> {
    let spec = t.spec();
    let d1 = AxisOp::d1(spec.n, spec.h());
    let d2 = AxisOp::d2(spec.n, spec.h());
    t.comps
        .iter()
        .enumerate()
        .map(|(a, c)| {
            std::array::from_fn(|p| {
                let (c1, c2) = sym_pair(p);
                if c1 == c2 { d2.apply_axis(c, c1) } else { d1.apply_axis(&dt[a][c1], c2) }
            })
        })
        .collect()
}

/// Build the geometry caches of a metric; fails with the grid location if the
/// metric is not positive definite anywhere.
pub fn geometry(g: SymTensorField) -> Result<MetricField> {
    let spec = g.spec();
    g.check_finite()?;
    let mut ginv = SymTensorField::zeros(spec);
    let mut det = ScalarField::zeros(spec);
    let mut sqrt_det = ScalarField::zeros(spec);
    for idx in 0..spec.len() {
        let m = g.mat_at(idx);
        let eig = sym_eigenvalues(m);
        if eig[0] <= POSITIVITY_TOL {
            let (i, j, k) = spec.ijk(idx);
            return Err(Error::NotPositiveDefinite { i, j, k, eig: eig[0] });
        }
        let d = det3(m);
        let inv = inv3(m, d);
        det.data[idx] = d;
        sqrt_det.data[idx] = d.sqrt();
        for a in 0..6 {
            let (p, q) = sym_pair(a);
            ginv.comps[a].data[idx] = inv[p][q];
        }
    }

    let dg = d_all(&g);
    let dd = dd_all(&g, &dg);

    // ∂_c g^{kl} = −(g⁻¹ ∂_c g g⁻¹)^{kl}, pointwise from the cached ∂g.
    let mut dginv: Vec<[ScalarField; 3]> = (0..6)
        .map(|_| std::array::from_fn(|_| ScalarField::zeros(spec)))
        .collect();
    for idx in 0..spec.len() {
        let gi = ginv.mat_at(idx);
        for c in 0..3 {
            let mut dm = [[0.0; 3]; 3];
            for b in 0..6 {
                let (p, q) = sym_pair(b);
                dm[p][q] = dg[b][c].data[idx];
                dm[q][p] = dm[p][q];
            }
            for b in 0..6 {
                let (k, l) = sym_pair(b);
                let mut acc = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        acc -= gi[k][p] * dm[p][q] * gi[q][l];
                    }
                }
                dginv[b][c].data[idx] = acc;
            }
        }
    }

    // Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})
    let mut gamma: Vec<[ScalarField; 6]> = (0..3)
        .map(|_| std::array::from_fn(|_| ScalarField::zeros(spec)))
        .collect();
    for idx in 0..spec.len() {
        for k in 0..3 {
            for a in 0..6 {
                let (i, j) = sym_pair(a);
                let mut acc = 0.0;
                for l in 0..3 {
                    let t = dg[sym_index(j, l)][i].data[idx] + dg[sym_index(i, l)][j].data[idx]
                        - dg[sym_index(i, j)][l].data[idx];
                    acc += 0.5 * ginv.comps[sym_index(k, l)].data[idx] * t;
                }
                gamma[k][a].data[idx] = acc;
            }
        }
    }

    // Ric in the expanded form of the module doc: explicit second derivatives
    // of g plus pointwise first-order and Γ·Γ terms.
    let mut ric = SymTensorField::zeros(spec);
    for idx in 0..spec.len() {
        let gi = ginv.mat_at(idx);
        // divginv[l] = Σ_k ∂_k g^{kl}
        let divginv: [f64; 3] = std::array::from_fn(|l| {
            (0..3).map(|k| dginv[sym_index(k, l)][k].data[idx]).sum()
        });
        for a in 0..6 {
            let (i, j) = sym_pair(a);
            let mut acc = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    let q = dd[sym_index(j, l)][sym_index(k, i)].data[idx]
                        + dd[sym_index(i, l)][sym_index(k, j)].data[idx]
                        - dd[a][sym_index(k, l)].data[idx]
                        - dd[sym_index(k, l)][a].data[idx];
                    acc += 0.5 * gi[k][l] * q;
                    acc -= 0.5 * dginv[sym_index(k, l)][j].data[idx]
                        * dg[sym_index(k, l)][i].data[idx];
                    acc += gamma[k][sym_index(k, l)].data[idx] * gamma[l][a].data[idx];
                    acc -= gamma[k][sym_index(j, l)].data[idx]
                        * gamma[l][sym_index(k, i)].data[idx];
                }
                // (Σ_m ∂_m g^{mk}) C_{k,ij}
                let c_low = 0.5
                    * (dg[sym_index(j, k)][i].data[idx] + dg[sym_index(i, k)][j].data[idx]
                        - dg[a][k].data[idx]);
                acc += divginv[k] * c_low;
            }
            ric.comps[a].data[idx] = acc;
        }
    }

    // R = g^{ij} Ric_{ij}
    let mut scal = ScalarField::zeros(spec);
    for idx in 0..spec.len() {
        let mut acc = 0.0;
        for a in 0..6 {
            acc += crate::grid::sym_mult(a) * ginv.comps[a].data[idx] * ric.comps[a].data[idx];
        }
        scal.data[idx] = acc;
    }

    Ok(MetricField { g, ginv, det, sqrt_det, dg, gamma, ric, scal })
}

impl MetricField {
    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.g.spec()
    }

    /// Tr_g t = g^{ij} t_{ij}.
    pub fn trace(&self, t: &SymTensorField) -> ScalarField {
        let spec = self.spec();
        let mut out = ScalarField::zeros(spec);
        for a in 0..6 {
            let m = crate::grid::sym_mult(a);
            for idx in 0..spec.len() {
                out.data[idx] += m * self.ginv.comps[a].data[idx] * t.comps[a].data[idx];
            }
        }
        out
    }

    /// g-inner product of two symmetric 2-tensors: s_{ij} t_{kl} g^{ik} g^{jl}.
    pub fn inner_sym(&self, s: &SymTensorField, t: &SymTensorField) -> ScalarField {
        let spec = self.spec();
        let mut out = ScalarField::zeros(spec);
        for idx in 0..spec.len() {
            let sm = s.mat_at(idx);
            let tm = t.mat_at(idx);
            let gi = self.ginv.mat_at(idx);
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            acc += sm[i][j] * tm[k][l] * gi[i][k] * gi[j][l];
                        }
                    }
                }
            }
            out.data[idx] = acc;
        }
        out
    }

    /// g-inner product of two vector fields (indices raised on one slot):
    /// g^{ij} v_i w_j for covariant inputs — our VectorFields store
    /// contravariant components, so this is g_{ij} v^i w^j.
    pub fn inner_vec(&self, v: &VectorField, w: &VectorField) -> ScalarField {
        let spec = self.spec();
        let mut out = ScalarField::zeros(spec);
        for idx in 0..spec.len() {
            let gm = self.g.mat_at(idx);
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += gm[i][j] * v.comps[i].data[idx] * w.comps[j].data[idx];
                }
            }
            out.data[idx] = acc;
        }
        out
    }

    /// Covariant derivative of a covariant symmetric 2-tensor:
    /// out[k][a] = ∇_k t_(a) = ∂_k t_{ij} − Γ^m_{ki} t_{mj} − Γ^m_{kj} t_{im}.
    pub fn cov_deriv_sym(&self, t: &SymTensorField) -> Vec<[ScalarField; 6]> {
        let spec = self.spec();
        let dt = d_all(t);
        let mut out: Vec<[ScalarField; 6]> = (0..3)
            .map(|_| std::array::from_fn(|_| ScalarField::zeros(spec)))
            .collect();
        for idx in 0..spec.len() {
            for k in 0..3 {
                for a in 0..6 {
                    let (i, j) = sym_pair(a);
                    let mut acc = dt[a][k].data[idx];
                    for m in 0..3 {
                        acc -= self.gamma[m][sym_index(k, i)].data[idx]
                            * t.comps[sym_index(m, j)].data[idx];
                        acc -= self.gamma[m][sym_index(k, j)].data[idx]
                            * t.comps[sym_index(i, m)].data[idx];
                    }
                    out[k][a].data[idx] = acc;
                }
            }
        }
        out
    }

    /// Covariant divergence of a covariant symmetric 2-tensor:
    /// (Div_g t)_j = g^{ik} ∇_k t_{ij} (covariant output components).
    pub fn divergence_sym(&self, t: &SymTensorField) -> VectorField {
        let spec = self.spec();
        let nabla = self.cov_deriv_sym(t);
        let mut out = VectorField::zeros(spec);
        for idx in 0..spec.len() {
            let gi = self.ginv.mat_at(idx);
            for j in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    for k in 0..3 {
                        acc += gi[i][k] * nabla[k][sym_index(i, j)].data[idx];
                    }
                }
                out.comps[j].data[idx] = acc;
            }
        }
        out
    }

    /// Covariant derivative of a contravariant vector field:
    /// out[a][j] = ∇_a z^j = ∂_a z^j + Γ^j_{am} z^m.
    pub fn cov_deriv_vec(&self, z: &VectorField) -> Vec<[ScalarField; 3]> {
        let spec = self.spec();
        let d1 = AxisOp::d1(spec.n, spec.h());
        let mut out: Vec<[ScalarField; 3]> = (0..3)
            .map(|_| std::array::from_fn(|_| ScalarField::zeros(spec)))
            .collect();
        for (a, row) in out.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                d1.apply_axis_into(&z.comps[j], a, slot);
                for m in 0..3 {
                    let gam = &self.gamma[j][sym_index(a, m)];
                    for idx in 0..spec.len() {
                        slot.data[idx] += gam.data[idx] * z.comps[m].data[idx];
                    }
                }
            }
        }
        out
    }

    /// Covariant divergence ∇_j z^j of a contravariant vector field.
    pub fn div_vec(&self, z: &VectorField) -> ScalarField {
        let nabla = self.cov_deriv_vec(z);
        let mut out = ScalarField::zeros(self.spec());
        for (a, row) in nabla.iter().enumerate() {
            out.axpy(1.0, &row[a]);
        }
        out
    }

    /// Hessian ∇²u_{ij} = ∂_i ∂_j u − Γ^k_{ij} ∂_k u, built from composed
    /// centered first differences.
    pub fn hessian(&self, u: &ScalarField) -> SymTensorField {
        let spec = self.spec();
        let d1 = AxisOp::d1(spec.n, spec.h());
        let du: [ScalarField; 3] = std::array::from_fn(|axis| d1.apply_axis(u, axis));
        let mut out = SymTensorField::zeros(spec);
        for a in 0..6 {
            let (i, j) = sym_pair(a);
            let dd = d1.apply_axis(&du[i], j);
            for idx in 0..spec.len() {
                let mut acc = dd.data[idx];
                for k in 0..3 {
                    acc -= self.gamma[k][a].data[idx] * du[k].data[idx];
                }
                out.comps[a].data[idx] = acc;
            }
        }
        out
    }

    /// Laplace–Beltrami Δ_g u = g^{ij} ∇²u_{ij}.
    pub fn laplacian(&self, u: &ScalarField) -> ScalarField {
        self.trace(&self.hessian(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{radius_of, GridSpec};
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_diagonal() {
        let e = sym_eigenvalues([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(e[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_full_matrix() {
        // eigenvalues of [[2,1,0],[1,2,0],[0,0,5]] are 1, 3, 5
        let e = sym_eigenvalues([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-10);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-10);
    }

    #[test]
    fn flat_metric_geometry_vanishes() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let m = geometry(SymTensorField::euclidean(spec)).unwrap();
        for k in 0..3 {
            for a in 0..6 {
                assert!(m.gamma[k][a].max_abs() < 1e-12);
            }
        }
        for a in 0..6 {
            assert!(m.ric.comps[a].max_abs() < 1e-12);
        }
        assert!(m.scal.max_abs() < 1e-12);
    }

    #[test]
    fn degenerate_metric_rejected_with_location() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let mut g = SymTensorField::euclidean(spec);
        let bad = spec.idx(3, 4, 5);
        g.comps[0].data[bad] = -1.0;
        match geometry(g) {
            Err(Error::NotPositiveDefinite { i, j, k, .. }) => {
                assert_eq!((i, j, k), (3, 4, 5));
            }
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_identity_to_rounding() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let g = SymTensorField::from_fn(spec, |x| {
            let u = 0.3 / (1.0 + radius_of(x));
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = if i == j { 1.0 + u } else { 0.05 * u };
                }
            }
            m
        });
        let met = geometry(g).unwrap();
        for idx in (0..spec.len()).step_by(97) {
            let gm = met.g.mat_at(idx);
            let gi = met.ginv.mat_at(idx);
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += gm[i][k] * gi[k][j];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((acc - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn schwarzschild_scalar_curvature_vanishes_at_second_order() {
        // isotropic Schwarzschild (1 + m/2r)⁴ δ is scalar-flat; the discrete
        // R is pure truncation error there and must shrink like h².
        let m_mass = 1.0;
        let worst = |n: usize| {
            let spec = GridSpec::new(n, 8.0).unwrap();
            let g = SymTensorField::from_fn(spec, |x| {
                let r = radius_of(x);
                let psi = (1.0 + m_mass / (2.0 * r)).powi(4);
                let mut m = [[0.0; 3]; 3];
                for i in 0..3 {
                    m[i][i] = psi;
                }
                m
            });
            let met = geometry(g).unwrap();
            let mut w = 0.0_f64;
            for (i, j, k, idx) in spec.iter() {
                let p = spec.point(i, j, k);
                let r = radius_of(p);
                if r >= 2.0 && r <= 5.0 {
                    w = w.max(met.scal.data[idx].abs());
                }
            }
            w
        };
        let (coarse, fine) = (worst(33), worst(65));
        assert!(fine < 0.1, "fine-grid |R| = {fine:.2e}");
        let ratio = coarse / fine;
        assert!(ratio > 2.5, "convergence ratio {ratio:.2} ({coarse:.2e} → {fine:.2e})");
    }

    #[test]
    fn hessian_of_quadratic_is_constant() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let met = geometry(SymTensorField::euclidean(spec)).unwrap();
        let u = ScalarField::from_fn(spec, |x| x[0] * x[0] + 2.0 * x[0] * x[1]);
        let h = met.hessian(&u);
        // interior check (one-sided rows are exact on quadratics too)
        for (i, j, k, idx) in spec.iter() {
            let _ = (i, j, k);
            assert_relative_eq!(h.comps[0].data[idx], 2.0, epsilon = 1e-9);
            assert_relative_eq!(h.comps[1].data[idx], 2.0, epsilon = 1e-9);
            assert_relative_eq!(h.comps[5].data[idx], 0.0, epsilon = 1e-9);
        }
    }
}
