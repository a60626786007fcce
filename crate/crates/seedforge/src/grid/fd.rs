//! Finite differences: second-order centered stencils in the interior,
//! second-order one-sided stencils on the cube faces, mixed derivatives by
//! composition.
//!
//! The 1D stencil along one axis is kept as an explicit sparse-row operator
//! ([`AxisOp`]) so that downstream code can also apply its exact transpose —
//! the discrete-transpose adjoint of every differential operator in this crate
//! is assembled from these transposes.

use super::ScalarField;
use crate::error::{Error, Result};

/// Which 1D stencil an [`AxisOp`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisOpKind {
    /// First derivative d/dx.
    D1,
    /// Second derivative d²/dx².
    D2,
    /// A transpose or other derived operator.
    Derived,
}

/// A 1D linear operator on N-point grid lines, stored as sparse rows.
#[derive(Debug, Clone)]
pub struct AxisOp {
    pub n: usize,
    pub kind: AxisOpKind,
    /// rows[i] = list of (column, coefficient).
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl AxisOp {
    /// Second-order first derivative: centered interior, one-sided at the ends.
    pub fn d1(n: usize, h: f64) -> AxisOp {
        let mut rows = Vec::with_capacity(n);
        // one-sided: f'(x₀) ≈ (−3f₀ + 4f₁ − f₂)/(2h)
        rows.push(vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]);
        for i in 1..n - 1 {
            rows.push(vec![(i - 1, -0.5 / h), (i + 1, 0.5 / h)]);
        }
        rows.push(vec![
            (n - 3, 0.5 / h),
            (n - 2, -2.0 / h),
            (n - 1, 1.5 / h),
        ]);
        AxisOp { n, kind: AxisOpKind::D1, rows }
    }

    /// Second-order second derivative: centered interior, one-sided at the ends.
    pub fn d2(n: usize, h: f64) -> AxisOp {
        let h2 = h * h;
        let mut rows = Vec::with_capacity(n);
        // one-sided: f''(x₀) ≈ (2f₀ − 5f₁ + 4f₂ − f₃)/h²
        rows.push(vec![
            (0, 2.0 / h2),
            (1, -5.0 / h2),
            (2, 4.0 / h2),
            (3, -1.0 / h2),
        ]);
        for i in 1..n - 1 {
            rows.push(vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]);
        }
        rows.push(vec![
            (n - 4, -1.0 / h2),
            (n - 3, 4.0 / h2),
            (n - 2, -5.0 / h2),
            (n - 1, 2.0 / h2),
        ]);
        AxisOp { n, kind: AxisOpKind::D2, rows }
    }

    /// Exact transpose (as a matrix on grid lines).
    pub fn transpose(&self) -> AxisOp {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                rows[j].push((i, c));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
        }
        AxisOp { n: self.n, kind: AxisOpKind::Derived, rows }
    }

    /// Same sparsity with squared coefficients (used for Jacobi-style
    /// diagonal estimates of normal operators).
    pub fn squared_coeffs(&self) -> AxisOp {
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, c)| (j, c * c)).collect())
            .collect();
        AxisOp { n: self.n, kind: AxisOpKind::Derived, rows }
    }

    /// Apply along the given axis (0 = x, 1 = y, 2 = z) of a 3D field.
    pub fn apply_axis(&self, f: &ScalarField, axis: usize) -> ScalarField {
        let mut out = ScalarField::zeros(f.spec);
        self.apply_axis_into(f, axis, &mut out);
        out
    }

    /// Apply along `axis`, writing into `out` (overwritten).
    pub fn apply_axis_into(&self, f: &ScalarField, axis: usize, out: &mut ScalarField) {
        self.apply_axis_impl::<false>(f, axis, out);
    }

    /// Apply along `axis`, accumulating into `out` (`out += D f`).
    pub fn apply_axis_accumulate(&self, f: &ScalarField, axis: usize, out: &mut ScalarField) {
        self.apply_axis_impl::<true>(f, axis, out);
    }

    fn apply_axis_impl<const ACC: bool>(&self, f: &ScalarField, axis: usize, out: &mut ScalarField) {
        let n = f.spec.n;
        debug_assert_eq!(self.n, n);
        debug_assert_eq!(out.spec, f.spec);
        let n2 = n * n;
        let src = &f.data;
        let dst = &mut out.data;
        // Each output row along `axis` is a linear combination of a few input
        // rows; the combinations run over contiguous chunks of the fastest
        // dimensions so the inner loops vectorize.
        match axis {
            0 => {
                // rows along x: per grid line, shifted-slice saxpys
                for line in 0..n2 {
                    let base = line * n;
                    for (i, row) in self.rows.iter().enumerate() {
                        let mut acc = if ACC { dst[base + i] } else { 0.0 };
                        for &(j, c) in row {
                            acc += c * src[base + j];
                        }
                        dst[base + i] = acc;
                    }
                }
            }
            1 => {
                // output chunk (k, j, ·) of length n from input chunks (k, j', ·)
                for k in 0..n {
                    let plane = k * n2;
                    for (i, row) in self.rows.iter().enumerate() {
                        let out_lo = plane + i * n;
                        if !ACC {
                            dst[out_lo..out_lo + n].fill(0.0);
                        }
                        for &(j, c) in row {
                            let in_lo = plane + j * n;
                            for t in 0..n {
                                dst[out_lo + t] += c * src[in_lo + t];
                            }
                        }
                    }
                }
            }
            _ => {
                // output plane (j, ·, ·) of length n² from input planes
                for (i, row) in self.rows.iter().enumerate() {
                    let out_lo = i * n2;
                    if !ACC {
                        dst[out_lo..out_lo + n2].fill(0.0);
                    }
                    for &(j, c) in row {
                        let in_lo = j * n2;
                        for t in 0..n2 {
                            dst[out_lo + t] += c * src[in_lo + t];
                        }
                    }
                }
            }
        }
    }
}

/// Apply a single-axis derivative of the given order (1 or 2 per call is
/// composed internally for higher orders).
pub fn fd_derivative_axis(f: &ScalarField, axis: usize, order: usize) -> Result<ScalarField> {
    if order > 4 {
        return Err(Error::DerivativeOrder(order));
    }
    let n = f.spec.n;
    let h = f.spec.h();
    let mut cur = f.clone();
    let mut rem = order;
    while rem > 0 {
        if rem >= 2 {
            cur = AxisOp::d2(n, h).apply_axis(&cur, axis);
            rem -= 2;
        } else {
            cur = AxisOp::d1(n, h).apply_axis(&cur, axis);
            rem -= 1;
        }
    }
    Ok(cur)
}

/// ∂^L f for the multi-index L = (l₁, l₂, l₃), total order ≤ 4.
///
/// Pure second derivatives use the dedicated 3-point stencil; mixed and
/// higher derivatives are compositions of the per-axis operators.
pub fn fd_derivative(f: &ScalarField, multi: [usize; 3]) -> Result<ScalarField> {
    let total: usize = multi.iter().sum();
    if total > 4 {
        return Err(Error::DerivativeOrder(total));
    }
    let mut cur = f.clone();
    for axis in 0..3 {
        if multi[axis] > 0 {
            cur = fd_derivative_axis(&cur, axis, multi[axis])?;
        }
    }
    Ok(cur)
}

/// All multi-indices of total order ≤ l (l ≤ 4), in a fixed deterministic
/// order; used by the weighted norms.
pub fn multi_indices_up_to(l: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=l {
        for a in (0..=total).rev() {
            for b in (0..=(total - a)).rev() {
                let c = total - a - b;
                out.push([a, b, c]);
            }
        }
    }
    out
}
