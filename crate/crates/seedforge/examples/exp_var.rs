use seedforge::elliptic::cg_guarded_prec;
use seedforge::grid::{fd_derivative, GridSpec, ScalarField, SymTensorField, VectorField};
use seedforge::operators::geometry::geometry;
use seedforge::operators::LinearizedConstraint;
use seedforge::variational::{NormalOperator, SpectralPrecond};
use std::time::Instant;

/// Injection restriction of one packed 4-block vector: fine n → coarse (n−1)/2+1.
fn restrict_packed(fine: &[f64], nf: usize) -> Vec<f64> {
    let nc = (nf - 1) / 2 + 1;
    let (nf3, nc3) = (nf * nf * nf, nc * nc * nc);
    let mut out = vec![0.0; 4 * nc3];
    for blk in 0..4 {
        for k in 0..nc {
            for j in 0..nc {
                for i in 0..nc {
                    out[blk * nc3 + i + nc * (j + nc * k)] =
                        fine[blk * nf3 + 2 * i + nf * (2 * j + nf * 2 * k)];
                }
            }
        }
    }
    out
}

/// Trilinear prolongation of one packed 4-block vector: coarse nc → fine 2nc−1.
fn prolong_packed(coarse: &[f64], nc: usize) -> Vec<f64> {
    let nf = 2 * nc - 1;
    let (nf3, nc3) = (nf * nf * nf, nc * nc * nc);
    let mut out = vec![0.0; 4 * nf3];
    let cidx = |i: usize, j: usize, k: usize| i + nc * (j + nc * k);
    for blk in 0..4 {
        let c = &coarse[blk * nc3..(blk + 1) * nc3];
        let o = &mut out[blk * nf3..(blk + 1) * nf3];
        for k in 0..nf {
            for j in 0..nf {
                for i in 0..nf {
                    let mut acc = 0.0;
                    let mut wtot = 0.0;
                    for (ci, wi) in [(i / 2, 1.0), ((i + 1) / 2, (i % 2) as f64)] {
                        for (cj, wj) in [(j / 2, 1.0), ((j + 1) / 2, (j % 2) as f64)] {
                            for (ck, wk) in [(k / 2, 1.0), ((k + 1) / 2, (k % 2) as f64)] {
                                let w = wi * wj * wk;
                                if w > 0.0 {
                                    acc += w * c[cidx(ci, cj, ck)];
                                    wtot += w;
                                }
                            }
                        }
                    }
                    o[i + nf * (j + nf * k)] = acc / wtot;
                }
            }
        }
    }
    out
}

fn flatten(fields: &[ScalarField]) -> Vec<f64> {
    let mut v = Vec::new();
    for f in fields {
        v.extend_from_slice(&f.data);
    }
    v
}

/// 1D matrix of the composed wide Laplacian D1∘D1 along one axis.
fn composed_lap_1d(spec: GridSpec) -> Vec<Vec<f64>> {
    let n = spec.n;
    let mut a = vec![vec![0.0; n]; n];
    for i0 in 0..n {
        let f = ScalarField::from_fn(spec, |_| 0.0);
        let mut f = f;
        for (i, _, _, idx) in spec.iter() {
            if i == i0 {
                f.data[idx] = 1.0;
            }
        }
        let g = fd_derivative(&fd_derivative(&f, [1, 0, 0]).unwrap(), [1, 0, 0]).unwrap();
        let mid = spec.idx(0, n / 2, n / 2) - 0; // base of line j=k=mid
        let base = spec.idx(0, n / 2, n / 2);
        let _ = mid;
        for i in 0..n {
            a[i][i0] = g.data[base + i];
        }
    }
    a
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns (eigenvalues,
/// eigenvector matrix V with V[i][k] = component i of eigenvector k).
fn sym_eig(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        v[i][i] = 1.0;
    }
    let scale: f64 = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let lam = (0..n).map(|i| a[i][i]).collect();
    (lam, v)
}

use faer::linalg::solvers::DenseSolveCore;
use rustfft::num_complex::Complex;

/// Dense LU with partial pivoting; solve in place.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Lu {
        let mut piv = vec![0usize; n];
        for col in 0..n {
            let mut pr = col;
            let mut pm = a[col * n + col].abs();
            for r in col + 1..n {
                let m = a[r * n + col].abs();
                if m > pm {
                    pm = m;
                    pr = r;
                }
            }
            piv[col] = pr;
            if pr != col {
                for c in 0..n {
                    a.swap(col * n + c, pr * n + c);
                }
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                a[r * n + col] = f;
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
        Lu { n, a, piv }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for col in 0..n {
            let pr = self.piv[col];
            if pr != col {
                x.swap(col, pr);
            }
            for r in col + 1..n {
                x[r] -= self.a[r * n + col] * x[col];
            }
        }
        for col in (0..n).rev() {
            x[col] /= self.a[col * n + col];
            for r in 0..col {
                x[r] -= self.a[r * n + col] * x[col];
            }
        }
    }
}

/// Orthonormal DST-I along one axis of an n³ field (naive O(n⁴), prototype).
struct Dst {
    n: usize,
    s: Vec<f64>, // s[k*n+i] = sqrt(2/(n+1)) sin(pi (k+1)(i+1)/(n+1))
    tmp: Vec<f64>,
}

impl Dst {
    fn new(n: usize) -> Dst {
        let norm = (2.0 / (n as f64 + 1.0)).sqrt();
        let mut s = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                s[k * n + i] = norm
                    * (std::f64::consts::PI * (k as f64 + 1.0) * (i as f64 + 1.0)
                        / (n as f64 + 1.0))
                        .sin();
            }
        }
        Dst { n, s, tmp: vec![0.0; n * n * n] }
    }

    fn apply_axis(&mut self, data: &mut [f64], axis: usize) {
        let n = self.n;
        let n2 = n * n;
        let s = &self.s;
        let tmp = &mut self.tmp;
        match axis {
            0 => {
                for line in 0..n2 {
                    let base = line * n;
                    for t in 0..n {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += s[t * n + i] * data[base + i];
                        }
                        tmp[base + t] = acc;
                    }
                }
            }
            1 => {
                for k in 0..n {
                    let plane = k * n2;
                    for t in 0..n {
                        let out_lo = plane + t * n;
                        tmp[out_lo..out_lo + n].fill(0.0);
                        for j in 0..n {
                            let c = s[t * n + j];
                            let in_lo = plane + j * n;
                            for x in 0..n {
                                tmp[out_lo + x] += c * data[in_lo + x];
                            }
                        }
                    }
                }
            }
            _ => {
                for t in 0..n {
                    let out_lo = t * n2;
                    tmp[out_lo..out_lo + n2].fill(0.0);
                    for j in 0..n {
                        let c = s[t * n + j];
                        let in_lo = j * n2;
                        for x in 0..n2 {
                            tmp[out_lo + x] += c * data[in_lo + x];
                        }
                    }
                }
            }
        }
        data[..n * n2].copy_from_slice(&tmp[..n * n2]);
    }
}

/// Per-axis face model for the u-block: the true 1D composed Laplacian
/// (regularized in its near-null checkerboard directions) along `axis`,
/// saturated sine symbols tangentially.  M = 2 B w B
/// with B = Ã ⊕ Λ ⊕ Λ; M⁻¹ = ½ B⁻ᵀ w⁻¹ B⁻¹.
struct FaceModel {
    axis: usize,
    n: usize,
    lus: Vec<Lu>,
    lus_t: Vec<Lu>,
    lut: Vec<usize>, // (a,b) tangential pair -> factor index
    inv_wg: Vec<f64>,
    dst: Dst,
}

impl FaceModel {
    fn new(spec: GridSpec, wg: &ScalarField, axis: usize, a_reg: &[f64]) -> FaceModel {
        let n = spec.n;
        let h = spec.h();
        // saturated tangential symbols (negative: model of d²)
        let sat: Vec<f64> = (0..n)
            .map(|k| {
                let kappa = std::f64::consts::PI * (k as f64 + 1.0) / (n as f64 + 1.0);
                -(kappa.min(std::f64::consts::FRAC_PI_2).sin() / h).powi(2)
            })
            .collect();
        // distinct sums sat[a]+sat[b]
        let mut mus: Vec<f64> = Vec::new();
        let mut lut = vec![0usize; n * n];
        for a in 0..n {
            for b in 0..n {
                let mu = sat[a] + sat[b];
                let pos = mus.iter().position(|m| (m - mu).abs() < 1e-12 * mu.abs().max(1.0));
                let idx = match pos {
                    Some(i) => i,
                    None => {
                        mus.push(mu);
                        mus.len() - 1
                    }
                };
                lut[a * n + b] = idx;
            }
        }
        let mut lus = Vec::with_capacity(mus.len());
        let mut lus_t = Vec::with_capacity(mus.len());
        for &mu in &mus {
            let mut m = a_reg.to_vec();
            let mut mt = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] += mu;
            }
            for i in 0..n {
                for j in 0..n {
                    mt[j * n + i] = m[i * n + j];
                }
            }
            lus.push(Lu::factor(m, n));
            lus_t.push(Lu::factor(mt, n));
        }
        FaceModel {
            axis,
            n,
            lus,
            lus_t,
            lut,
            inv_wg: wg.data.iter().map(|w| 1.0 / w).collect(),
            dst: Dst::new(n),
        }
    }

    /// Solve (Ã + μI) along `self.axis` for every line, choosing μ from the
    /// two tangential DST indices.
    fn line_solves(&mut self, data: &mut [f64], transpose: bool) {
        let n = self.n;
        let n2 = n * n;
        let stride = [1usize, n, n2][self.axis];
        let (sa, sb) = match self.axis {
            0 => (n, n2),
            1 => (1, n2),
            _ => (1, n),
        };
        let mut line = vec![0.0; n];
        for b in 0..n {
            for a in 0..n {
                let base = a * sa + b * sb;
                for t in 0..n {
                    line[t] = data[base + t * stride];
                }
                let f = self.lut[a * n + b];
                if transpose {
                    self.lus_t[f].solve(&mut line);
                } else {
                    self.lus[f].solve(&mut line);
                }
                for t in 0..n {
                    data[base + t * stride] = line[t];
                }
            }
        }
    }

    /// z ← ½ B⁻ᵀ wg⁻¹ B⁻¹ r (u-block only).
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let (t1, t2) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        z.copy_from_slice(r);
        self.dst.apply_axis(z, t1);
        self.dst.apply_axis(z, t2);
        self.line_solves(z, false);
        self.dst.apply_axis(z, t1);
        self.dst.apply_axis(z, t2);
        for (v, iw) in z.iter_mut().zip(&self.inv_wg) {
            *v *= iw;
        }
        self.dst.apply_axis(z, t1);
        self.dst.apply_axis(z, t2);
        self.line_solves(z, true);
        self.dst.apply_axis(z, t1);
        self.dst.apply_axis(z, t2);
        for v in z.iter_mut() {
            *v *= 0.5;
        }
    }
}

/// Regularized 1D composed Laplacian: shift near-null right singular
/// directions to mid-frequency strength.
fn regularized_lap_1d(spec: GridSpec) -> Vec<f64> {
    let n = spec.n;
    let h = spec.h();
    let a2 = composed_lap_1d(spec);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = a2[i][j];
        }
    }
    let m = faer::Mat::from_fn(n, n, |i, j| a[i * n + j]);
    let svd = m.svd().unwrap();
    let smax = svd.S()[0];
    let c = 1.0 / (h * h);
    let mut shifted = 0;
    for k in (0..n).rev() {
        let s = svd.S()[k];
        if s > 0.05 * c {
            break;
        }
        // right singular vector v: A v ≈ 0; push it to -c v (d²-like sign)
        let v: Vec<f64> = (0..n).map(|i| svd.V()[(i, k)]).collect();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] -= c * v[i] * v[j];
            }
        }
        shifted += 1;
    }
    println!(
        "reg lap: n={n}, smax={smax:.2e}, shifted {shifted} near-null dirs (floor {:.2e})",
        0.05 * c
    );
    a
}

/// u-block preconditioner by complex fast diagonalization of the true 1D
/// composed Laplacian (with its one-sided closures): M⁻¹ = ½ Δ̂⁻ᵀ wg⁻¹ Δ̂⁻¹
/// with Δ̂ = A⊕A⊕A, A = V Λ V⁻¹.
struct ComplexFastDiag {
    n: usize,
    v: Vec<Complex<f64>>,    // V[i*n+k]: component i of eigenvector k
    vinv: Vec<Complex<f64>>, // V⁻¹
    inv_lam3: Vec<Complex<f64>>,
    inv_wg: Vec<f64>,
    buf: Vec<Complex<f64>>,
    tmp: Vec<Complex<f64>>,
}

impl ComplexFastDiag {
    fn new(spec: GridSpec, wg: &ScalarField) -> Self {
        let n = spec.n;
        let h = spec.h();
        let a = composed_lap_1d(spec);
        let m = faer::Mat::from_fn(n, n, |i, j| -a[i][j]);
        let e = m.eigen().unwrap();
        let u = e.U();
        let s = e.S();
        let mut v = vec![Complex::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let c = u[(i, k)];
                v[i * n + k] = Complex::new(c.re, c.im);
            }
        }
        let uinv = u.partial_piv_lu().inverse();
        let mut vinv = vec![Complex::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let c = uinv[(i, k)];
                vinv[i * n + k] = Complex::new(c.re, c.im);
            }
        }
        let lam: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let c = s[k];
                Complex::new(c.re, c.im)
            })
            .collect();
        let svd = u.svd().unwrap();
        let smax = svd.S()[0].re;
        let smin = svd.S()[n - 1].re;
        println!(
            "cfd: kappa(V)={:.2e}, min|lam|={:.2e}, max|im lam|={:.2e}",
            smax / smin,
            lam.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min),
            lam.iter().map(|l| l.im.abs()).fold(0.0, f64::max)
        );
        let floor = 1.0 / (h * h);
        let mut inv_lam3 = vec![Complex::new(0.0, 0.0); spec.len()];
        for (i, j, k, idx) in spec.iter() {
            let mut l3 = lam[i] + lam[j] + lam[k];
            let mag = l3.norm();
            if mag < floor {
                l3 *= floor / mag.max(1e-300);
            }
            inv_lam3[idx] = Complex::new(1.0, 0.0) / l3;
        }
        ComplexFastDiag {
            n,
            v,
            vinv,
            inv_lam3,
            inv_wg: wg.data.iter().map(|w| 1.0 / w).collect(),
            buf: vec![Complex::new(0.0, 0.0); spec.len()],
            tmp: vec![Complex::new(0.0, 0.0); spec.len()],
        }
    }

    /// buf ← transform along `axis` with matrix m (mt=false: y_t = Σ_i M[t][i] x_i
    /// with M[t][i] = mat[t*n+i]; mt=true uses the transpose M[i][t]).
    fn axis_transform(&mut self, which: u8, axis: usize, mt: bool) {
        let n = self.n;
        let n2 = n * n;
        let mat: &[Complex<f64>] = if which == 0 { &self.v } else { &self.vinv };
        let idx = |t: usize, i: usize| if mt { i * n + t } else { t * n + i };
        let data = &mut self.buf;
        let tmp = &mut self.tmp;
        match axis {
            0 => {
                for line in 0..n2 {
                    let base = line * n;
                    for t in 0..n {
                        let mut acc = Complex::new(0.0, 0.0);
                        for i in 0..n {
                            acc += mat[idx(t, i)] * data[base + i];
                        }
                        tmp[base + t] = acc;
                    }
                }
            }
            1 => {
                for k in 0..n {
                    let plane = k * n2;
                    for t in 0..n {
                        let out_lo = plane + t * n;
                        tmp[out_lo..out_lo + n].fill(Complex::new(0.0, 0.0));
                        for j in 0..n {
                            let c = mat[idx(t, j)];
                            let in_lo = plane + j * n;
                            for x in 0..n {
                                tmp[out_lo + x] += c * data[in_lo + x];
                            }
                        }
                    }
                }
            }
            _ => {
                for t in 0..n {
                    let out_lo = t * n2;
                    tmp[out_lo..out_lo + n2].fill(Complex::new(0.0, 0.0));
                    for j in 0..n {
                        let c = mat[idx(t, j)];
                        let in_lo = j * n2;
                        for x in 0..n2 {
                            tmp[out_lo + x] += c * data[in_lo + x];
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut self.buf, &mut self.tmp);
    }

    /// z_u ← ½ Δ̂⁻ᵀ wg⁻¹ Δ̂⁻¹ r_u.
    fn apply_u(&mut self, r: &[f64], z: &mut [f64]) {
        let n3 = self.inv_lam3.len();
        for i in 0..n3 {
            self.buf[i] = Complex::new(r[i], 0.0);
        }
        // Δ̂⁻¹ = V (Λ3)⁻¹ V⁻¹ per axis
        for axis in 0..3 {
            self.axis_transform(1, axis, false); // V⁻¹
        }
        for i in 0..n3 {
            self.buf[i] *= self.inv_lam3[i];
        }
        for axis in 0..3 {
            self.axis_transform(0, axis, false); // V
        }
        for i in 0..n3 {
            self.buf[i] *= self.inv_wg[i];
        }
        // Δ̂⁻ᵀ = V⁻ᵀ (Λ3)⁻¹ Vᵀ per axis
        for axis in 0..3 {
            self.axis_transform(0, axis, true); // Vᵀ
        }
        for i in 0..n3 {
            self.buf[i] *= self.inv_lam3[i];
        }
        for axis in 0..3 {
            self.axis_transform(1, axis, true); // V⁻ᵀ
        }
        for i in 0..n3 {
            z[i] = 0.5 * self.buf[i].re;
        }
    }
}

struct EigenPrecond {
    n: usize,
    v: Vec<Vec<f64>>, // V[i][k]
    inv_lam3: Vec<f64>,
    inv_wg: Vec<f64>,
    inv_sqrt_wh: Vec<f64>,
    tmp: Vec<f64>,
}

impl EigenPrecond {
    fn new(spec: GridSpec, wg: &ScalarField, wh: &ScalarField) -> Self {
        let n = spec.n;
        let h = spec.h();
        let a = composed_lap_1d(spec);
        // L = -(A + Aᵀ)/2 (positive-ish)
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                l[i][j] = -0.5 * (a[i][j] + a[j][i]);
            }
        }
        let (lam, v) = sym_eig(l);
        // frequency of each eigenvector under the compact tridiagonal Laplacian
        let mut lam_hat = vec![0.0; n];
        for k in 0..n {
            let q: Vec<f64> = (0..n).map(|i| v[i][k]).collect();
            let mut mu = 0.0;
            for i in 0..n {
                let left = if i > 0 { q[i - 1] } else { 0.0 };
                let right = if i + 1 < n { q[i + 1] } else { 0.0 };
                mu += q[i] * (2.0 * q[i] - left - right) / (h * h);
            }
            let kappa = 2.0 * (0.5 * (mu * h * h).sqrt().min(1.0)).asin();
            let sat = (kappa.min(std::f64::consts::FRAC_PI_2).sin() / h).powi(2);
            lam_hat[k] = lam[k].max(sat);
        }
        let mut inv_lam3 = vec![0.0; spec.len()];
        for (i, j, k, idx) in spec.iter() {
            inv_lam3[idx] = 1.0 / (lam_hat[i] + lam_hat[j] + lam_hat[k]);
        }
        EigenPrecond {
            n,
            v,
            inv_lam3,
            inv_wg: wg.data.iter().map(|w| 1.0 / w).collect(),
            inv_sqrt_wh: wh.data.iter().map(|w| 1.0 / w.sqrt()).collect(),
            tmp: vec![0.0; spec.len()],
        }
    }

    /// data ← transform along `axis` with Vᵀ (forward=true) or V (false).
    fn axis_transform(&mut self, data: &mut [f64], axis: usize, forward: bool) {
        let n = self.n;
        let n2 = n * n;
        let m = |t: usize, i: usize| if forward { self.v[i][t] } else { self.v[t][i] };
        let tmp = &mut self.tmp;
        match axis {
            0 => {
                for line in 0..n2 {
                    let base = line * n;
                    for t in 0..n {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += m(t, i) * data[base + i];
                        }
                        tmp[base + t] = acc;
                    }
                }
            }
            1 => {
                for k in 0..n {
                    let plane = k * n2;
                    for t in 0..n {
                        let out_lo = plane + t * n;
                        tmp[out_lo..out_lo + n].fill(0.0);
                        for j in 0..n {
                            let c = m(t, j);
                            let in_lo = plane + j * n;
                            for x in 0..n {
                                tmp[out_lo + x] += c * data[in_lo + x];
                            }
                        }
                    }
                }
            }
            _ => {
                for t in 0..n {
                    let out_lo = t * n2;
                    tmp[out_lo..out_lo + n2].fill(0.0);
                    for j in 0..n {
                        let c = m(t, j);
                        let in_lo = j * n2;
                        for x in 0..n2 {
                            tmp[out_lo + x] += c * data[in_lo + x];
                        }
                    }
                }
            }
        }
        data.copy_from_slice(tmp);
    }

    fn laplacian_solve(&mut self, data: &mut [f64]) {
        for axis in 0..3 {
            self.axis_transform(data, axis, true);
        }
        for (v, il) in data.iter_mut().zip(&self.inv_lam3) {
            *v *= il;
        }
        for axis in 0..3 {
            self.axis_transform(data, axis, false);
        }
    }

    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let n3 = self.inv_lam3.len();
        let mut buf = r[..n3].to_vec();
        self.laplacian_solve(&mut buf);
        for (v, iw) in buf.iter_mut().zip(&self.inv_wg.clone()) {
            *v *= iw;
        }
        self.laplacian_solve(&mut buf);
        for (o, v) in z[..n3].iter_mut().zip(&buf) {
            *o = 0.5 * v;
        }
        for c in 0..3 {
            let lo = (c + 1) * n3;
            buf.copy_from_slice(&r[lo..lo + n3]);
            for (v, iw) in buf.iter_mut().zip(&self.inv_sqrt_wh.clone()) {
                *v *= iw;
            }
            self.laplacian_solve(&mut buf);
            for ((o, v), iw) in z[lo..lo + n3].iter_mut().zip(&buf).zip(&self.inv_sqrt_wh.clone()) {
                *o = (2.0 / 3.0) * v * iw;
            }
        }
    }
}

struct Level {
    spec: GridSpec,
    op: NormalOperator,
    sp: SpectralPrecond,
    scaling: Vec<f64>,
}

impl Level {
    fn new(n: usize) -> Level {
        let spec = GridSpec::new(n, 16.0).unwrap();
        let g = geometry(SymTensorField::euclidean(spec)).unwrap();
        let h = SymTensorField::zeros(spec);
        let op = NormalOperator::new(&g, &h, 0.5, 1.5);
        let mut sp = SpectralPrecond::new(spec, &op.wg, &op.wh);
        let n3 = spec.len();
        let nn = 4 * n3;
        // depth-profile diagonal scaling
        let diag_t = op.diagonal();
        let depth_of = |t: usize| t.min(n - 1 - t);
        let ndepth = 4usize.min(n / 4);
        let mut e = vec![0.0; nn];
        let mut me = vec![0.0; nn];
        let mut scaling = vec![1.0; nn];
        for base in [0usize, n3] {
            let mut a = vec![0.0f64; ndepth + 1];
            let mut probe = |pt: usize, e: &mut Vec<f64>, me: &mut Vec<f64>| {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[pt] = 1.0;
                sp.apply(e, me);
                me[pt] * diag_t[pt]
            };
            for d in 0..ndepth {
                a[d] = probe(base + spec.idx(d, n / 2, n / 2), &mut e, &mut me);
            }
            a[ndepth] = probe(base + spec.idx(n / 2, n / 2, n / 2), &mut e, &mut me);
            let ncomp = if base == 0 { 1 } else { 3 };
            for c in 0..ncomp {
                for (i, j, k, idx) in spec.iter() {
                    let mut f = 1.0;
                    for d in [depth_of(i), depth_of(j), depth_of(k)] {
                        if d < ndepth {
                            f *= (a[d] / a[ndepth]).clamp(0.1, 20.0);
                        }
                    }
                    scaling[base + c * n3 + idx] = 1.0 / f.sqrt();
                }
            }
        }
        Level { spec, op, sp, scaling }
    }

    fn solve(&mut self, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Vec<f64> {
        let n3 = self.spec.len();
        let spec = self.spec;
        let op = &self.op;
        let apply = |x: &[f64], out: &mut [f64]| {
            let fields: Vec<ScalarField> = (0..4)
                .map(|c| ScalarField { spec, data: x[c * n3..(c + 1) * n3].to_vec() })
                .collect();
            let (u, z) = LinearizedConstraint::unpack_output(fields);
            let (tu, tz) = op.apply(&u, &z);
            out[..n3].copy_from_slice(&tu.data);
            for c in 0..3 {
                out[(c + 1) * n3..(c + 2) * n3].copy_from_slice(&tz.comps[c].data);
            }
        };
        let sp = &mut self.sp;
        let scaling = &self.scaling;
        let mut rs = vec![0.0; 4 * n3];
        let prec = |r: &[f64], z: &mut [f64]| {
            for ((o, v), s) in rs.iter_mut().zip(r).zip(scaling) {
                *o = v * s;
            }
            sp.apply(&rs, z);
            for (o, s) in z.iter_mut().zip(scaling) {
                *o *= s;
            }
        };
        let t0 = Instant::now();
        let (x, iters, res) = cg_guarded_prec(apply, prec, b, x0, tol, max_iter).unwrap();
        println!(
            "level n={}: {} iters, res={:.2e}, {:?}",
            self.spec.n,
            iters,
            res,
            t0.elapsed()
        );
        x
    }
}

fn nested_solve(n: usize, b: &[f64], tol: f64) -> Vec<f64> {
    let x0 = if n >= 65 {
        let nc = (n - 1) / 2 + 1;
        let bc = restrict_packed(b, n);
        // the initial guess only needs prolongation-level accuracy
        let xc = nested_solve(nc, &bc, tol.max(1e-4));
        Some(prolong_packed(&xc, nc))
    } else {
        None
    };
    let mut level = Level::new(n);
    level.solve(b, x0.as_deref(), tol, 100 * n)
}

/// 1D spectral study: eigenvalues of M^{-1/2} T M^{-1/2} where
/// T = A w Aᵀ (A = composed D1² or compact D2) and M is the sine-symbol model.
fn one_d_study(n: usize) {
    let spec = GridSpec::new(n, 16.0).unwrap();
    let h = spec.h();
    let a_comp2 = composed_lap_1d(spec);
    let mut a_comp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a_comp[i * n + j] = a_comp2[i][j];
        }
    }
    // compact D2 matrix
    let mut a_cpt = vec![0.0; n * n];
    let h2 = h * h;
    for (c, v) in [(0usize, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)] {
        a_cpt[c] = v / h2;
        a_cpt[(n - 1) * n + (n - 1 - c)] = v / h2;
    }
    for i in 1..n - 1 {
        a_cpt[i * n + i - 1] = 1.0 / h2;
        a_cpt[i * n + i] = -2.0 / h2;
        a_cpt[i * n + i + 1] = 1.0 / h2;
    }
    // weight profile along the line: w = 1 + x²
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let x = -spec.r_outer + i as f64 * h;
            1.0 + x * x
        })
        .collect();
    let matmul = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i * n + k];
                if aik != 0.0 {
                    for j in 0..n {
                        c[i * n + j] += aik * b[k * n + j];
                    }
                }
            }
        }
        c
    };
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut s_mat = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            s_mat[k * n + i] = norm
                * (std::f64::consts::PI * (k as f64 + 1.0) * (i as f64 + 1.0) / (n as f64 + 1.0))
                    .sin();
        }
    }
    for (label, a, sym_compact) in
        [("composed", &a_comp, false), ("compact", &a_cpt, true)]
    {
        // T = A w Aᵀ
        let mut awt = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                awt[i * n + j] = a[j * n + i] * w[i]; // (w Aᵀ)[i][j]
            }
        }
        let t = matmul(a, &awt);
        // model M⁻¹ = S Λ⁻¹ S w⁻¹ S Λ⁻¹ S with per-mode symbol
        let lam: Vec<f64> = (0..n)
            .map(|k| {
                let kappa = std::f64::consts::PI * (k as f64 + 1.0) / (n as f64 + 1.0);
                if sym_compact {
                    // compact D2 symbol (monotone, no saturation needed)
                    (2.0 * (kappa / 2.0).sin() / h).powi(2)
                } else {
                    (kappa.min(std::f64::consts::FRAC_PI_2).sin() / h).powi(2)
                }
            })
            .collect();
        let apply_diag = |m: &[f64], d: &dyn Fn(usize) -> f64| -> Vec<f64> {
            let mut out = m.to_vec();
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] *= d(i);
                }
            }
            out
        };
        let sl = apply_diag(&s_mat, &|i| 1.0 / lam[i]); // Λ⁻¹S
        let half1 = matmul(&s_mat, &sl); // S Λ⁻¹ S... careful: want S^T Λ⁻¹ S but S symmetric-index? s_mat[k][i] symmetric in (k,i) ✓
        let winv = apply_diag(&half1, &|_| 1.0); // placeholder
        let _ = winv;
        let mut mid = half1.clone();
        for i in 0..n {
            for j in 0..n {
                mid[i * n + j] /= w[i];
            }
        }
        let minv = matmul(&half1, &mid); // (SΛ⁻¹S) w⁻¹ (SΛ⁻¹S)
        // symmetric product: eig of M⁻¹T via generalized symmetric: compute
        // C = Minv^{1/2} T Minv^{1/2} using eigendecomposition of Minv
        let mut minv_sym = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                minv_sym[i][j] = 0.5 * (minv[i * n + j] + minv[j * n + i]);
            }
        }
        let (mev, mvec) = sym_eig(minv_sym);
        // Minv^{1/2} = Q sqrt(ev) Qᵀ
        let mut mhalf = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += mvec[i][k] * mev[k].max(0.0).sqrt() * mvec[j][k];
                }
                mhalf[i * n + j] = acc;
            }
        }
        let c1 = matmul(&mhalf, &t);
        let c = matmul(&c1, &mhalf);
        let mut c_sym = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                c_sym[i][j] = 0.5 * (c[i * n + j] + c[j * n + i]);
            }
        }
        let (mut ev, _) = sym_eig(c_sym);
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let low = ev.iter().filter(|&&e| e < 0.2).count();
        let high = ev.iter().filter(|&&e| e > 5.0).count();
        println!(
            "{label}: eig(M⁻¹T) min={:.3e} max={:.3e}, <0.2: {low}, >5: {high}",
            ev[0],
            ev[n - 1]
        );
        let lo_str: Vec<String> = ev.iter().take(8).map(|e| format!("{e:.2e}")).collect();
        let hi_str: Vec<String> = ev.iter().rev().take(8).map(|e| format!("{e:.2e}")).collect();
        println!("  lowest: {lo_str:?}");
        println!("  highest: {hi_str:?}");
        // diagonal scaling: S = 1/sqrt(diag(M⁻¹)·diag(T)), spectrum of S M⁻¹ S T
        let mut minv_s = minv.clone();
        let s: Vec<f64> = (0..n)
            .map(|i| 1.0 / (minv[i * n + i] * t[i * n + i]).max(1e-300).sqrt())
            .collect();
        for i in 0..n {
            for j in 0..n {
                minv_s[i * n + j] *= s[i] * s[j];
            }
        }
        let mut minv_sym2 = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                minv_sym2[i][j] = 0.5 * (minv_s[i * n + j] + minv_s[j * n + i]);
            }
        }
        let (mev2, mvec2) = sym_eig(minv_sym2);
        let mut mhalf2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += mvec2[i][k] * mev2[k].max(0.0).sqrt() * mvec2[j][k];
                }
                mhalf2[i * n + j] = acc;
            }
        }
        let d1m = matmul(&mhalf2, &t);
        let d2m = matmul(&d1m, &mhalf2);
        let mut c_sym2 = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                c_sym2[i][j] = 0.5 * (d2m[i * n + j] + d2m[j * n + i]);
            }
        }
        let (mut ev2, _) = sym_eig(c_sym2);
        ev2.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let lo2: Vec<String> = ev2.iter().take(6).map(|e| format!("{e:.2e}")).collect();
        let hi2: Vec<String> = ev2.iter().rev().take(6).map(|e| format!("{e:.2e}")).collect();
        println!("  scaled: lowest {lo2:?} highest {hi2:?}");
    }
}

fn main() {
    if std::env::args().nth(2).map(|s| s == "oned").unwrap_or(false) {
        let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(33);
        one_d_study(n);
        return;
    }
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(33);
    let use_eigen: bool = std::env::args().nth(2).map(|s| s == "eigen").unwrap_or(false);
    let nested: bool = std::env::args().nth(2).map(|s| s == "nested").unwrap_or(false);
    let spec = GridSpec::new(n, 16.0).unwrap();
    let g = geometry(SymTensorField::euclidean(spec)).unwrap();
    let h = SymTensorField::zeros(spec);
    let op = NormalOperator::new(&g, &h, 0.5, 1.5);
    let f = ScalarField::from_fn(spec, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        (-r2 / 4.0).exp()
    });
    let mut v = VectorField::zeros(spec);
    v.comps[1] = ScalarField::from_fn(spec, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        0.5 * (-r2 / 3.0).exp()
    });
    let b = flatten(&LinearizedConstraint::pack_output(&f, &v));
    let nn = b.len();
    let n3 = spec.len();

    if nested {
        let t0 = Instant::now();
        let x = nested_solve(n, &b, 1e-7);
        println!("nested total: {:?}, |x| = {:.3e}", t0.elapsed(), x.iter().map(|v| v * v).sum::<f64>().sqrt());
        return;
    }

    let t0 = Instant::now();
    let mut sp_dst = SpectralPrecond::new(spec, &op.wg, &op.wh);
    let mut sp_eig = if use_eigen {
        Some(EigenPrecond::new(spec, &op.wg, &op.wh))
    } else {
        None
    };
    let use_cfd: bool = std::env::args().nth(2).map(|s| s == "cfd").unwrap_or(false);
    let mut cfd = if use_cfd { Some(ComplexFastDiag::new(spec, &op.wg)) } else { None };
    let use_face: bool = std::env::args().nth(2).map(|s| s == "face").unwrap_or(false);
    let mut faces: Vec<FaceModel> = if use_face {
        let a_reg = regularized_lap_1d(spec);
        (0..3).map(|ax| FaceModel::new(spec, &op.wg, ax, &a_reg)).collect()
    } else {
        Vec::new()
    };
    let mut face_buf = vec![0.0; n3];
    println!("precond setup: {:?}", t0.elapsed());

    let apply = |x: &[f64], out: &mut [f64]| {
        let fields: Vec<ScalarField> = (0..4)
            .map(|c| ScalarField { spec, data: x[c * n3..(c + 1) * n3].to_vec() })
            .collect();
        let (u, z) = LinearizedConstraint::unpack_output(fields);
        let (tu, tz) = op.apply(&u, &z);
        out[..n3].copy_from_slice(&tu.data);
        for c in 0..3 {
            out[(c + 1) * n3..(c + 2) * n3].copy_from_slice(&tz.comps[c].data);
        }
    };

    // per-depth diagonal products a_blk(d) probed at (d, mid, mid), multiplicative
    // depth model: product(i,j,k) ≈ C·Π_axis a(d_axis); scale S = 1/sqrt(Π a(d)/a_int)
    let diag_t = op.diagonal();
    let depth_of = |t: usize| t.min(n - 1 - t);
    let scaling: Vec<f64> = {
        let ndepth = 4usize;
        let mut e = vec![0.0; nn];
        let mut me = vec![0.0; nn];
        let mut s = vec![1.0; nn];
        for (blk, base) in [("u", 0usize), ("z", n3)] {
            let _ = blk;
            let mut a = vec![0.0f64; ndepth + 1]; // a[0..ndepth], a[ndepth]=interior ref
            for d in 0..ndepth {
                let pt = base + spec.idx(d, n / 2, n / 2);
                e.iter_mut().for_each(|v| *v = 0.0);
                e[pt] = 1.0;
                if let Some(ep) = sp_eig.as_mut() {
                    ep.apply(&e, &mut me);
                } else {
                    sp_dst.apply(&e, &mut me);
                }
                a[d] = me[pt] * diag_t[pt];
            }
            let pt = base + spec.idx(n / 2, n / 2, n / 2);
            e.iter_mut().for_each(|v| *v = 0.0);
            e[pt] = 1.0;
            if let Some(ep) = sp_eig.as_mut() {
                ep.apply(&e, &mut me);
            } else {
                sp_dst.apply(&e, &mut me);
            }
            a[ndepth] = me[pt] * diag_t[pt];
            println!("{blk} depth products: {:?}", a);
            let ncomp = if base == 0 { 1 } else { 3 };
            for c in 0..ncomp {
                for (i, j, k, idx) in spec.iter() {
                    let mut f = 1.0;
                    for d in [depth_of(i), depth_of(j), depth_of(k)] {
                        if d < ndepth {
                            f *= (a[d] / a[ndepth]).clamp(0.1, 20.0);
                        }
                    }
                    s[base + c * n3 + idx] = 1.0 / f.sqrt();
                }
            }
        }
        s
    };

    let mut prec = |r: &[f64], z: &mut [f64]| {
        let rs: Vec<f64> = r.iter().zip(&scaling).map(|(v, s)| v * s).collect();
        if let Some(ep) = sp_eig.as_mut() {
            ep.apply(&rs, z);
        } else {
            sp_dst.apply(&rs, z);
        }
        for (o, s) in z.iter_mut().zip(&scaling) {
            *o *= s;
        }
        if let Some(c) = cfd.as_mut() {
            c.apply_u(&r[..n3], &mut z[..n3]);
        }
        if !faces.is_empty() {
            z[..n3].fill(0.0);
            for fm in faces.iter_mut() {
                fm.apply(&r[..n3], &mut face_buf);
                for (o, v) in z[..n3].iter_mut().zip(&face_buf) {
                    *o += v / 3.0;
                }
            }
        }
    };

    // diag products at probes
    {
        let diag = op.diagonal();
        let mut e = vec![0.0; nn];
        let mut me = vec![0.0; nn];
        for (label, base) in [("u", 0usize), ("z1", n3)] {
            for (ptn, pt) in [
                ("mid", spec.idx(n / 2, n / 2, n / 2)),
                ("edge", spec.idx(1, n / 2, n / 2)),
                ("face", spec.idx(0, n / 2, n / 2)),
                ("corner", spec.idx(0, 0, n / 2)),
            ] {
                let i = base + pt;
                e.iter_mut().for_each(|v| *v = 0.0);
                e[i] = 1.0;
                prec(&e, &mut me);
                println!("{label}/{ptn}: product={:.3e}", me[i] * diag[i]);
            }
        }
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    if use_cfd || use_face {
        // symmetry check of the preconditioner
        let mut rng_state = 12345u64;
        let mut rnd = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..nn).map(|_| rnd()).collect();
        let bb: Vec<f64> = (0..nn).map(|_| rnd()).collect();
        let mut ma = vec![0.0; nn];
        let mut mb = vec![0.0; nn];
        prec(&a, &mut ma);
        prec(&bb, &mut mb);
        let asym = (dot(&ma, &bb) - dot(&a, &mb)).abs()
            / (dot(&ma, &ma).sqrt() * dot(&bb, &bb).sqrt());
        println!("prec asymmetry: {asym:.2e}, <a,Ma>={:.3e}", dot(&a, &ma));
    }
    let bn = dot(&b, &b).sqrt();
    let mut x = vec![0.0; nn];
    let mut r = b.clone();
    let mut z = vec![0.0; nn];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ax = vec![0.0; nn];
    let t0 = Instant::now();
    for it in 0..3000 {
        apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= 0.0 {
            println!("iter {it}: pap={pap:.3e} BAD");
            break;
        }
        let alpha = rz / pap;
        for i in 0..nn {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        let rn = dot(&r, &r).sqrt() / bn;
        if it % 25 == 0 || rn <= 1e-7 {
            println!("iter {it}: rel={rn:.3e}  ({:?})", t0.elapsed());
        }
        if rn <= 1e-7 {
            break;
        }
        if it == 300 {
            // tangential spectrum of the u-residual on the x=0 face (naive DST)
            let mut slice = vec![0.0; n * n];
            for k in 0..n {
                for j in 0..n {
                    slice[j + k * n] = r[spec.idx(0, j, k)];
                }
            }
            let mut quad = [[0.0f64; 2]; 2];
            for a in 0..n {
                for bq in 0..n {
                    let mut c = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            c += slice[j + k * n]
                                * ((a + 1) as f64 * (j + 1) as f64 * std::f64::consts::PI
                                    / (n + 1) as f64)
                                    .sin()
                                * ((bq + 1) as f64 * (k + 1) as f64 * std::f64::consts::PI
                                    / (n + 1) as f64)
                                    .sin();
                        }
                    }
                    quad[(a >= n / 2) as usize][(bq >= n / 2) as usize] += c * c;
                }
            }
            let tot: f64 = quad.iter().flatten().sum();
            println!(
                "face x=0 u-residual spectrum: LL={:.1}% LH={:.1}% HL={:.1}% HH={:.1}%",
                100.0 * quad[0][0] / tot,
                100.0 * quad[0][1] / tot,
                100.0 * quad[1][0] / tot,
                100.0 * quad[1][1] / tot
            );
        }
        prec(&r, &mut z);
        let rz2 = dot(&r, &z);
        let beta = rz2 / rz;
        rz = rz2;
        for i in 0..nn {
            p[i] = z[i] + beta * p[i];
        }
    }
}
