//! Spherical-shell sampling of grid fields.
//!
//! The asymptotic statements of the theory are limits along r → ∞; on the
//! truncated grid they are evaluated on spherical shells interpolated
//! (trilinearly) from the Cartesian data. Surface integrals use a
//! latitude–longitude product rule with sin ϑ weights, which integrates the
//! low angular modes appearing in all our integrands essentially exactly.

use super::{GridSpec, ScalarField};
use crate::error::{Error, Result};

/// Trilinear interpolation of a scalar field at an arbitrary point of the
/// closed cube.
pub fn interp_scalar(f: &ScalarField, x: [f64; 3]) -> f64 {
    let spec = f.spec;
    let h = spec.h();
    let n = spec.n;
    let mut c = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let s = (x[a] + spec.r_outer) / h;
        let i = s.floor() as isize;
        let i = i.clamp(0, n as isize - 2) as usize;
        c[a] = i;
        t[a] = (s - i as f64).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let w = (if di == 0 { 1.0 - t[0] } else { t[0] })
                    * (if dj == 0 { 1.0 - t[1] } else { t[1] })
                    * (if dk == 0 { 1.0 - t[2] } else { t[2] });
                acc += w * f.data[spec.idx(c[0] + di, c[1] + dj, c[2] + dk)];
            }
        }
    }
    acc
}

/// Latitude–longitude sampler for spherical shells.
#[derive(Debug, Clone, Copy)]
pub struct ShellSampler {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for ShellSampler {
    fn default() -> Self {
        ShellSampler { n_theta: 48, n_phi: 96 }
    }
}

impl ShellSampler {
    /// Visit every sample direction with its solid-angle weight dω
    /// (Σ weights = 4π).
    pub fn for_each(&self, mut f: impl FnMut([f64; 3], f64)) {
        let pi = std::f64::consts::PI;
        let dth = pi / self.n_theta as f64;
        let dph = 2.0 * pi / self.n_phi as f64;
        for it in 0..self.n_theta {
            let th = (it as f64 + 0.5) * dth;
            let (st, ct) = th.sin_cos();
            // exact band solid angle: ∫ sinϑ dϑ over the cell, so constants
            // integrate exactly
            let w_th = ((it as f64) * dth).cos() - ((it as f64 + 1.0) * dth).cos();
            let w_th = w_th * dph;
            for ip in 0..self.n_phi {
                let ph = (ip as f64 + 0.5) * dph;
                f([st * ph.cos(), st * ph.sin(), ct], w_th);
            }
        }
    }

    /// ∫_{S_r} f dS with the surface area element (r² dω), `f` evaluated at
    /// the shell points via the supplied closure.
    pub fn integrate(&self, r: f64, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|omega, dw| {
            acc += f([r * omega[0], r * omega[1], r * omega[2]]) * r * r * dw;
        });
        acc
    }

    /// ∫_{S²} f(ω) dω over directions only.
    pub fn integrate_solid_angle(&self, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|omega, dw| acc += f(omega) * dw);
        acc
    }

    /// Shell maximum of |f| over sample directions satisfying the filter.
    pub fn max_where(
        &self,
        r: f64,
        mut f: impl FnMut([f64; 3]) -> f64,
        mut keep: impl FnMut([f64; 3]) -> bool,
    ) -> f64 {
        let mut m = f64::NEG_INFINITY;
        self.for_each(|omega, _| {
            if keep(omega) {
                m = m.max(f([r * omega[0], r * omega[1], r * omega[2]]).abs());
            }
        });
        m
    }
}

fn check_shell(spec: GridSpec, r: f64) -> Result<()> {
    if !(r > 0.0) || r > spec.r_outer {
        return Err(Error::ShellsUnavailable(format!(
            "shell radius {r} outside (0, {}]",
            spec.r_outer
        )));
    }
    Ok(())
}

/// Maximum of |f| over a spherical shell of radius r.
pub fn shell_max(f: &ScalarField, r: f64) -> Result<f64> {
    check_shell(f.spec, r)?;
    Ok(ShellSampler::default().max_where(r, |x| interp_scalar(f, x), |_| true))
}

/// Mean of f over a spherical shell of radius r (solid-angle average).
pub fn shell_mean(f: &ScalarField, r: f64) -> Result<f64> {
    check_shell(f.spec, r)?;
    let s = ShellSampler::default();
    let mut acc = 0.0;
    let mut tot = 0.0;
    s.for_each(|omega, dw| {
        acc += interp_scalar(f, [r * omega[0], r * omega[1], r * omega[2]]) * dw;
        tot += dw;
    });
    Ok(acc / tot)
}

/// ∫_{S_r} f dS of a grid scalar field (trilinear shell samples, surface
/// area element).
pub fn surface_integral(f: &ScalarField, r: f64) -> Result<f64> {
    check_shell(f.spec, r)?;
    Ok(ShellSampler::default().integrate(r, |x| interp_scalar(f, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solid_angle_totals_four_pi() {
        let s = ShellSampler::default();
        let total = s.integrate_solid_angle(|_| 1.0);
        assert_relative_eq!(total, 4.0 * std::f64::consts::PI, max_relative = 1e-10);
    }

    #[test]
    fn interpolation_exact_on_trilinear_functions() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let f = ScalarField::from_fn(spec, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[2]);
        for p in [[0.3, -2.7, 5.1], [7.9, 7.9, -7.9], [0.0, 0.0, 0.0]] {
            let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[2];
            assert_relative_eq!(interp_scalar(&f, p), exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn surface_integral_of_one_is_sphere_area() {
        let spec = GridSpec::new(33, 8.0).unwrap();
        let f = ScalarField::constant(spec, 1.0);
        let a = surface_integral(&f, 5.0).unwrap();
        assert_relative_eq!(a, 4.0 * std::f64::consts::PI * 25.0, max_relative = 1e-10);
    }

    #[test]
    fn shell_max_of_radial_power() {
        let spec = GridSpec::new(65, 8.0).unwrap();
        let f = ScalarField::from_fn(spec, |x| {
            let r2 = x.iter().map(|c| c * c).sum::<f64>();
            1.0 / (1.0 + r2)
        });
        let m = shell_max(&f, 4.0).unwrap();
        assert_relative_eq!(m, 1.0 / 17.0, max_relative = 0.01);
    }

    #[test]
    fn shell_outside_domain_rejected() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let f = ScalarField::zeros(spec);
        assert!(shell_max(&f, 9.0).is_err());
        assert!(surface_integral(&f, -1.0).is_err());
    }
}
