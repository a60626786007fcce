//! Decay-rate extraction: least-squares slope of log(shell-max |f|) against
//! log r, for both a field and its gradient magnitude.

use crate::error::{Error, Result};
use crate::grid::{shell_max, AxisOp, ScalarField};

/// Measured decay exponents of a field and of |∂f|.
#[derive(Debug, Clone, Copy)]
pub struct DecaySlope {
    pub field_slope: f64,
    pub gradient_slope: f64,
}

fn fit_slope(f: &ScalarField, radii: &[f64]) -> Result<f64> {
    let mut xs = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for &r in radii {
        let m = shell_max(f, r)?;
        if !(m > 0.0) {
            return Err(Error::EmptyShells);
        }
        xs.push(r.ln());
        ys.push(m.ln());
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Least-squares decay slopes on shells r ∈ [r_lo, r_hi] (which must sit in
/// [R_outer/4, 3R_outer/4]).
pub fn decay_slope(f: &ScalarField, r_lo: f64, r_hi: f64) -> Result<DecaySlope> {
    let spec = f.spec;
    let (lim_lo, lim_hi) = (spec.r_outer / 4.0, 3.0 * spec.r_outer / 4.0);
    if !(r_lo < r_hi) || r_lo < lim_lo - 1e-12 || r_hi > lim_hi + 1e-12 {
        return Err(Error::ShellsUnavailable(format!(
            "fit range [{r_lo}, {r_hi}] outside [{lim_lo}, {lim_hi}]"
        )));
    }
    let n_shells = 12;
    let radii: Vec<f64> = (0..n_shells)
        .map(|i| r_lo + (r_hi - r_lo) * i as f64 / (n_shells - 1) as f64)
        .collect();
    let field_slope = fit_slope(f, &radii)?;

    let d1 = AxisOp::d1(spec.n, spec.h());
    let mut grad2 = ScalarField::zeros(spec);
    for axis in 0..3 {
        let d = d1.apply_axis(f, axis);
        for (g, &v) in grad2.data.iter_mut().zip(&d.data) {
            *g += v * v;
        }
    }
    for v in grad2.data.iter_mut() {
        *v = v.sqrt();
    }
    let gradient_slope = fit_slope(&grad2, &radii)?;
    Ok(DecaySlope { field_slope, gradient_slope })
}
