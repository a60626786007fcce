//! The vector momentum system (LM W)^i = −ΔW^i − ∂_i(∂_j W^j) = E^i:
//! a symmetric CG solver, a Green's-kernel convolution solver, and the
//! explicit asymptotic model fields.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{integrate, radius_field, radius_of, AxisOp, GridSpec, ScalarField, VectorField};

use super::cg::cg;
use super::poisson::{apply_operator, max_iters, operator_diagonal, CG_TOL};

/// Vector momentum problem (LM W) = E.
#[derive(Debug, Clone)]
pub struct MomentumSystem {
    pub e: VectorField,
}

/// Continuum-discretized LM with composed centered differences:
/// (LM W)^i = −Σ_k ∂_k∂_k W^i − ∂_i (Σ_j ∂_j W^j).
pub fn lm_apply(w: &VectorField) -> VectorField {
    let spec = w.spec();
    let d1 = AxisOp::d1(spec.n, spec.h());
    let mut div = ScalarField::zeros(spec);
    for j in 0..3 {
        let d = d1.apply_axis(&w.comps[j], j);
        div.axpy(1.0, &d);
    }
    let mut out = VectorField::zeros(spec);
    for i in 0..3 {
        for k in 0..3 {
            let d = d1.apply_axis(&w.comps[i], k);
            let dd = d1.apply_axis(&d, k);
            out.comps[i].axpy(-1.0, &dd);
        }
        let dgrad = d1.apply_axis(&div, i);
        out.comps[i].axpy(-1.0, &dgrad);
    }
    out
}

/// Column sums of squares of an [`AxisOp`] (diagonal of opᵀ·op).
fn col_sq(op: &AxisOp) -> Vec<f64> {
    let mut out = vec![0.0; op.n];
    for row in &op.rows {
        for &(j, c) in row {
            out[j] += c * c;
        }
    }
    out
}

/// Symmetric solver operator: block-diagonal finite-volume Robin Laplacians
/// (exponent 1) plus the exact-transpose divergence normal term D1ᵀ(Σ D1).
fn solver_apply(spec: GridSpec, d1: &AxisOp, d1t: &AxisOp, w: &[f64], out: &mut [f64]) {
    let len = spec.len();
    for i in 0..3 {
        apply_operator(spec, 1.0, None, &w[i * len..(i + 1) * len], &mut out[i * len..(i + 1) * len]);
    }
    let mut div = ScalarField::zeros(spec);
    let mut tmp = ScalarField::zeros(spec);
    for j in 0..3 {
        let comp = ScalarField { spec, data: w[j * len..(j + 1) * len].to_vec() };
        d1.apply_axis_into(&comp, j, &mut tmp);
        div.axpy(1.0, &tmp);
    }
    for i in 0..3 {
        d1t.apply_axis_into(&div, i, &mut tmp);
        for (o, &v) in out[i * len..(i + 1) * len].iter_mut().zip(&tmp.data) {
            *o += v;
        }
    }
}

/// Solve the momentum system by CG on the symmetric positive operator.
pub fn solve_momentum_system(sys: &MomentumSystem) -> Result<VectorField> {
    solve_momentum_system_from(sys, None)
}

/// As [`solve_momentum_system`] but warm-started.
pub fn solve_momentum_system_from(
    sys: &MomentumSystem,
    x0: Option<&VectorField>,
) -> Result<VectorField> {
    let spec = sys.e.spec();
    sys.e.check_finite()?;
    let len = spec.len();
    let d1 = AxisOp::d1(spec.n, spec.h());
    let d1t = d1.transpose();
    let lap_diag = operator_diagonal(spec, 1.0, None);
    let csq = col_sq(&d1);
    let mut diag = vec![0.0; 3 * len];
    for (i, j, k, idx) in spec.iter() {
        let pos = [i, j, k];
        for comp in 0..3 {
            diag[comp * len + idx] = lap_diag[idx] + csq[pos[comp]];
        }
    }
    let mut b = Vec::with_capacity(3 * len);
    for comp in &sys.e.comps {
        b.extend_from_slice(&comp.data);
    }
    let x0_flat: Option<Vec<f64>> = x0.map(|w| {
        let mut v = Vec::with_capacity(3 * len);
        for comp in &w.comps {
            v.extend_from_slice(&comp.data);
        }
        v
    });
    let apply = |x: &[f64], out: &mut [f64]| solver_apply(spec, &d1, &d1t, x, out);
    let (sol, _iters) = cg(apply, &diag, &b, x0_flat.as_deref(), CG_TOL, max_iters(spec))?;
    let mut w = VectorField::zeros(spec);
    for i in 0..3 {
        w.comps[i].data.copy_from_slice(&sol[i * len..(i + 1) * len]);
    }
    Ok(w)
}

/// Closed-form Green's kernel M_ij(d) = (1/16π|d|)(d_i d_j/|d|² + 3δ_ij).
pub fn greens_kernel(d: [f64; 3]) -> [[f64; 3]; 3] {
    let r2: f64 = d.iter().map(|c| c * c).sum();
    let r = r2.sqrt();
    let c = 1.0 / (16.0 * std::f64::consts::PI * r);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = c * (d[i] * d[j] / r2 + if i == j { 3.0 } else { 0.0 });
        }
    }
    m
}

/// Average of 1/|u| over the unit cube centered at the origin (midpoint rule
/// on a fine subgrid; the integrand is integrable so this converges).
fn unit_cube_inv_distance_average() -> f64 {
    let m = 64;
    let dh = 1.0 / m as f64;
    let mut acc = 0.0;
    for a in 0..m {
        let x = (a as f64 + 0.5) * dh - 0.5;
        for b in 0..m {
            let y = (b as f64 + 0.5) * dh - 0.5;
            for c in 0..m {
                let z = (c as f64 + 0.5) * dh - 0.5;
                acc += 1.0 / (x * x + y * y + z * z).sqrt();
            }
        }
    }
    acc * dh * dh * dh
}

/// 3D FFT (in place) over an m³ cube, axis by axis.
fn fft3(data: &mut [Complex<f64>], m: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut line = vec![Complex::new(0.0, 0.0); m];
    for axis in 0..3 {
        let stride = [1usize, m, m * m][axis];
        let (sa, sb) = match axis {
            0 => (m, m * m),
            1 => (1, m * m),
            _ => (1, m),
        };
        for b in 0..m {
            for a in 0..m {
                let base = a * sa + b * sb;
                for t in 0..m {
                    line[t] = data[base + t * stride];
                }
                fft.process(&mut line);
                for t in 0..m {
                    data[base + t * stride] = line[t];
                }
            }
        }
    }
}

/// Convolution solver: W^i(x) = Σ_y M_ij(x−y) E^j(y) h³, via zero-padded FFT.
/// The diagonal cell uses the analytic cell average of the kernel.
pub fn greens_momentum(e: &VectorField) -> Result<VectorField> {
    let spec = e.spec();
    e.check_finite()?;
    // enforce compact support: source must vanish outside r < R_outer/2
    let mut inside = 0.0_f64;
    let mut outside = 0.0_f64;
    for (i, j, k, idx) in spec.iter() {
        let r = radius_of(spec.point(i, j, k));
        for c in 0..3 {
            let v = e.comps[c].data[idx].abs();
            if r < spec.r_outer / 2.0 {
                inside = inside.max(v);
            } else {
                outside = outside.max(v);
            }
        }
    }
    if outside > 1e-6 * inside.max(1e-300) {
        return Err(Error::SupportTooLarge { support: spec.r_outer, limit: spec.r_outer / 2.0 });
    }

    let n = spec.n;
    let h = spec.h();
    let m = 2 * n;
    let mlen = m * m * m;
    let mut planner = FftPlanner::new();

    // forward-transform the source components
    let mut src_hat: Vec<Vec<Complex<f64>>> = Vec::with_capacity(3);
    for c in 0..3 {
        let mut buf = vec![Complex::new(0.0, 0.0); mlen];
        for (i, j, k, idx) in spec.iter() {
            buf[i + m * (j + m * k)] = Complex::new(e.comps[c].data[idx], 0.0);
        }
        fft3(&mut buf, m, &mut planner, false);
        src_hat.push(buf);
    }

    let diag_avg = {
        let c_avg = unit_cube_inv_distance_average() / h;
        (1.0 / (16.0 * std::f64::consts::PI)) * (1.0 / 3.0 + 3.0) * c_avg
    };
    let displacement = |t: usize| -> f64 {
        let ti = t as isize;
        let half = m as isize / 2;
        let s = if ti <= half { ti } else { ti - m as isize };
        s as f64 * h
    };
    // near the singularity the kernel curvature is large on the cell scale:
    // use cell averages there instead of point samples
    let near_cells = 4.0 * h + 1e-12;
    let cell_avg = |d: [f64; 3], p: usize, q: usize| -> f64 {
        let sub = 8;
        let dh = h / sub as f64;
        let mut acc = 0.0;
        for a in 0..sub {
            for b in 0..sub {
                for c in 0..sub {
                    let dd = [
                        d[0] + (a as f64 + 0.5) * dh - h / 2.0,
                        d[1] + (b as f64 + 0.5) * dh - h / 2.0,
                        d[2] + (c as f64 + 0.5) * dh - h / 2.0,
                    ];
                    acc += greens_kernel(dd)[p][q];
                }
            }
        }
        acc / (sub * sub * sub) as f64
    };

    let mut out_hat: Vec<Vec<Complex<f64>>> =
        (0..3).map(|_| vec![Complex::new(0.0, 0.0); mlen]).collect();
    let mut kbuf = vec![Complex::new(0.0, 0.0); mlen];
    for a in 0..6 {
        let (p, q) = crate::grid::sym_pair(a);
        for v in kbuf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for tz in 0..m {
            let dz = displacement(tz);
            for ty in 0..m {
                let dy = displacement(ty);
                for tx in 0..m {
                    let dx = displacement(tx);
                    let val = if dx == 0.0 && dy == 0.0 && dz == 0.0 {
                        if p == q { diag_avg } else { 0.0 }
                    } else if dx.abs() <= near_cells && dy.abs() <= near_cells && dz.abs() <= near_cells
                    {
                        cell_avg([dx, dy, dz], p, q)
                    } else {
                        greens_kernel([dx, dy, dz])[p][q]
                    };
                    kbuf[tx + m * (ty + m * tz)] = Complex::new(val, 0.0);
                }
            }
        }
        fft3(&mut kbuf, m, &mut planner, false);
        // symmetric kernel: component (p,q) couples p←q and (if p≠q) q←p
        for idx in 0..mlen {
            let kz = kbuf[idx];
            out_hat[p][idx] += kz * src_hat[q][idx];
            if p != q {
                out_hat[q][idx] += kz * src_hat[p][idx];
            }
        }
    }
    drop(kbuf);
    drop(src_hat);

    let scale = h * h * h / mlen as f64;
    let mut w = VectorField::zeros(spec);
    for (c, mut buf) in out_hat.into_iter().enumerate() {
        fft3(&mut buf, m, &mut planner, true);
        for (i, j, k, idx) in spec.iter() {
            w.comps[c].data[idx] = buf[i + m * (j + m * k)].re * scale;
        }
    }
    Ok(w)
}

/// The model fields W_i with W_i^j = −(x_i x_j + 3ρ²δ_ij)/ρ³ (smooth radius).
pub fn model_w_fields(spec: GridSpec) -> [VectorField; 3] {
    std::array::from_fn(|i| {
        VectorField::from_fn(spec, |x| {
            let rho = radius_of(x);
            let r3 = rho * rho * rho;
            std::array::from_fn(|j| {
                -(x[i] * x[j] + if i == j { 3.0 * rho * rho } else { 0.0 }) / r3
            })
        })
    })
}

/// Their images E_i = LM(W_i): compactly supported up to truncation, with
/// ∫ E_i^i = −16π.
pub fn model_e_fields(spec: GridSpec) -> [VectorField; 3] {
    model_w_fields(spec).map(|w| lm_apply(&w))
}

/// c(E) = (1/4π) ∫ E.
pub fn c_coefficient(e: &ScalarField) -> f64 {
    integrate(e) / (4.0 * std::f64::consts::PI)
}

/// W_∞(E) = −(1/16π) Σ_i (∫E^i dx) W_i.
pub fn w_infinity(e: &VectorField) -> VectorField {
    let spec = e.spec();
    let models = model_w_fields(spec);
    let mut out = VectorField::zeros(spec);
    for (i, model) in models.iter().enumerate() {
        let total = integrate(&e.comps[i]);
        out.axpy(-total / (16.0 * std::f64::consts::PI), model);
    }
    out
}

/// Radial weight 1/ρ for far-field comparisons.
pub fn inv_radius(spec: GridSpec) -> ScalarField {
    radius_field(spec).pow(-1.0)
}
