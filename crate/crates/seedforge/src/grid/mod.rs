//! Discretization of one asymptotically Euclidean end.
//!
//! The manifold is truncated to the cube [−R, R]³ with a uniform Cartesian
//! grid (N points per axis, N odd so the origin is a grid point). The smooth
//! radius function
//!
//! ```text
//! r(x) = sqrt(|x|² + exp(−1/(1−|x|²)))   for |x| < 1,
//! r(x) = |x|                              for |x| ≥ 1,
//! ```
//!
//! replaces |x| wherever a weight or an r-power profile is needed; it is
//! bounded below by e^(−1/2) and agrees with |x| outside the unit ball, so it
//! regularizes the origin without changing any asymptotics.

mod fd;
mod norms;
mod bc;
mod shells;
mod snapshot;

pub use fd::{fd_derivative, fd_derivative_axis, multi_indices_up_to, AxisOp, AxisOpKind};
pub use norms::{weighted_norm, integrate, quad_weight, FieldLike, NormKind};
pub use bc::{apply_decay_bc, apply_decay_bc_sym, apply_decay_bc_vector, robin_alpha};
pub use shells::{interp_scalar, shell_max, shell_mean, surface_integral, ShellSampler};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use crate::error::{Error, Result};

/// Uniform Cartesian grid on the cube [−R_outer, R_outer]³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per axis (odd, ≥ 17).
    pub n: usize,
    /// Half-width of the cube.
    pub r_outer: f64,
}

impl GridSpec {
    pub fn new(n: usize, r_outer: f64) -> Result<Self> {
        if n < 17 || n % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "N must be odd and ≥ 17 (got {n})"
            )));
        }
        if !(r_outer >= 8.0) {
            return Err(Error::InvalidGrid(format!(
                "R_outer must be ≥ 8 so asymptotic fits have an r-range (got {r_outer})"
            )));
        }
        Ok(GridSpec { n, r_outer })
    }

    /// Grid spacing 2·R_outer/(N−1).
    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.r_outer / (self.n as f64 - 1.0)
    }

    /// Total number of grid points N³.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index i along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.r_outer + self.h() * i as f64
    }

    /// Linear index, x-fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Inverse of [`GridSpec::idx`].
    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.n;
        let j = (idx / self.n) % self.n;
        let k = idx / (self.n * self.n);
        (i, j, k)
    }

    /// Cartesian coordinates of a grid point.
    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Whether the point lies on the boundary of the cube.
    #[inline]
    pub fn on_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        let m = self.n - 1;
        i == 0 || j == 0 || k == 0 || i == m || j == m || k == m
    }

    /// Iterate over all (i, j, k, linear index) in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |k| {
            (0..n).flat_map(move |j| (0..n).map(move |i| (i, j, k, i + n * (j + n * k))))
        })
    }
}

/// The smooth radius function of the end, evaluated at |x|.
pub fn radius_of(x: [f64; 3]) -> f64 {
    let rho2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    if rho2 >= 1.0 {
        rho2.sqrt()
    } else {
        (rho2 + (-1.0 / (1.0 - rho2)).exp()).sqrt()
    }
}

/// Scalar field on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField { spec, data: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        ScalarField { spec, data: vec![c; spec.len()] }
    }

    /// Evaluate a closure of the grid point coordinates at every point.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut data = vec![0.0; spec.len()];
        for (i, j, k, idx) in spec.iter() {
            data[idx] = f(spec.point(i, j, k));
        }
        ScalarField { spec, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.spec.idx(i, j, k)]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (index, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self += c · other
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        debug_assert_eq!(self.spec, other.spec);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Pointwise product, in place: self *= other.
    pub fn mul_assign_field(&mut self, other: &ScalarField) {
        debug_assert_eq!(self.spec, other.spec);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// The radius function sampled on a grid.
#[derive(Debug, Clone)]
pub struct RadiusField {
    pub field: ScalarField,
}

/// Build the radius field r(x) of Remark-2.2 type on the grid.
pub fn radius_field(spec: GridSpec) -> RadiusField {
    RadiusField { field: ScalarField::from_fn(spec, radius_of) }
}

impl RadiusField {
    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.field.spec
    }

    /// r^p as a scalar field.
    pub fn pow(&self, p: f64) -> ScalarField {
        let mut f = self.field.clone();
        for v in &mut f.data {
            *v = v.powf(p);
        }
        f
    }
}

/// Vector field (3 components) on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: [ScalarField; 3],
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        VectorField { comps: std::array::from_fn(|_| ScalarField::zeros(spec)) }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut comps: [ScalarField; 3] = std::array::from_fn(|_| ScalarField::zeros(spec));
        for (i, j, k, idx) in spec.iter() {
            let v = f(spec.point(i, j, k));
            for a in 0..3 {
                comps[a].data[idx] = v[a];
            }
        }
        VectorField { comps }
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.comps[0].spec
    }

    pub fn check_finite(&self) -> Result<()> {
        for c in &self.comps {
            c.check_finite()?;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for f in &mut self.comps {
            f.scale(c);
        }
    }

    pub fn axpy(&mut self, c: f64, other: &VectorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(c, b);
        }
    }
}

/// Position of component (i, j) in the packed symmetric order
/// (11, 12, 13, 22, 23, 33).
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    const TABLE: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    TABLE[i][j]
}

/// The (i, j) pair of packed component a, with i ≤ j.
#[inline]
pub fn sym_pair(a: usize) -> (usize, usize) {
    const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    PAIRS[a]
}

/// Multiplicity of packed component a in a full 3×3 contraction (1 on the
/// diagonal, 2 off it).
#[inline]
pub fn sym_mult(a: usize) -> f64 {
    const M: [f64; 6] = [1.0, 2.0, 2.0, 1.0, 2.0, 1.0];
    M[a]
}

/// Symmetric rank-2 tensor field, components stored in the order
/// (11, 12, 13, 22, 23, 33).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub comps: [ScalarField; 6],
}

impl SymTensorField {
    pub fn zeros(spec: GridSpec) -> Self {
        SymTensorField { comps: std::array::from_fn(|_| ScalarField::zeros(spec)) }
    }

    /// The identity (Euclidean metric) on the grid.
    pub fn euclidean(spec: GridSpec) -> Self {
        let mut t = Self::zeros(spec);
        for a in [0, 3, 5] {
            t.comps[a] = ScalarField::constant(spec, 1.0);
        }
        t
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 3]) -> [[f64; 3]; 3]) -> Self {
        let mut t = Self::zeros(spec);
        for (i, j, k, idx) in spec.iter() {
            let m = f(spec.point(i, j, k));
            for a in 0..6 {
                let (p, q) = sym_pair(a);
                t.comps[a].data[idx] = m[p][q];
            }
        }
        t
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.comps[0].spec
    }

    /// Component (i, j) field.
    #[inline]
    pub fn comp(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[sym_index(i, j)]
    }

    /// Full 3×3 matrix at a linear index.
    #[inline]
    pub fn mat_at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for a in 0..6 {
            let (p, q) = sym_pair(a);
            m[p][q] = self.comps[a].data[idx];
            m[q][p] = m[p][q];
        }
        m
    }

    pub fn check_finite(&self) -> Result<()> {
        for c in &self.comps {
            c.check_finite()?;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for f in &mut self.comps {
            f.scale(c);
        }
    }

    pub fn axpy(&mut self, c: f64, other: &SymTensorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(c, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gridspec_rejects_bad_parameters() {
        assert!(GridSpec::new(16, 10.0).is_err()); // even
        assert!(GridSpec::new(15, 10.0).is_err()); // too small
        assert!(GridSpec::new(17, 7.9).is_err()); // domain too small
        assert!(GridSpec::new(17, 8.0).is_ok());
    }

    #[test]
    fn spacing_and_coords() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        assert_relative_eq!(spec.h(), 1.0);
        assert_relative_eq!(spec.coord(0), -8.0);
        assert_relative_eq!(spec.coord(8), 0.0); // origin on grid (N odd)
        assert_relative_eq!(spec.coord(16), 8.0);
    }

    #[test]
    fn radius_at_origin_is_exp_minus_half() {
        // r(0) = sqrt(exp(−1/(1−0))) = e^(−1/2) ≈ 0.60653
        assert_relative_eq!(radius_of([0.0; 3]), (-0.5_f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn radius_equals_norm_outside_unit_ball() {
        assert_relative_eq!(radius_of([2.0, 0.0, 0.0]), 2.0);
        assert_relative_eq!(radius_of([1.0, 1.0, 1.0]), 3.0_f64.sqrt());
    }

    #[test]
    fn radius_continuous_at_unit_sphere() {
        // At |x| = 0.999 the interior branch is within 1e-6 of |x|: the
        // mollifier exp(−1/(1−ρ²)) is transcendentally small there.
        let v = radius_of([0.999, 0.0, 0.0]);
        assert!((v - 0.999).abs() < 1e-6, "r(0.999) = {v}");
    }

    #[test]
    fn radius_bounded_below_everywhere() {
        let spec = GridSpec::new(33, 8.0).unwrap();
        let r = radius_field(spec);
        let min = r.field.data.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= (-0.5_f64).exp() - 1e-15, "min r = {min}");
    }

    #[test]
    fn sym_index_roundtrip() {
        for a in 0..6 {
            let (i, j) = sym_pair(a);
            assert_eq!(sym_index(i, j), a);
            assert_eq!(sym_index(j, i), a);
        }
    }

    #[test]
    fn euclidean_tensor_is_identity() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let e = SymTensorField::euclidean(spec);
        let m = e.mat_at(0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}
