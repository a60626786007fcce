//! Jacobi-preconditioned conjugate gradients on flat slices, matrix-free.

use crate::error::{Error, Result};

/// Solve A x = b for a symmetric positive definite matrix-free operator.
///
/// `apply(x, out)` must overwrite `out` with A·x; `diag` is the (strictly
/// positive) diagonal used as the Jacobi preconditioner. Converges when
/// ‖r‖₂ ≤ tol·‖b‖₂. Returns the solution and the iteration count.
pub fn cg<F>(
    mut apply: F,
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    assert_eq!(diag.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = match x0 {
        Some(v) => {
            assert_eq!(v.len(), n);
            v.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history: Vec<f64> = Vec::new();
    let mut r_norm = norm(&r);
    for iter in 0..max_iter {
        if r_norm <= tol * b_norm {
            return Ok((x, iter));
        }
        apply(&p, &mut ax);
        let p_ap = dot(&p, &ax);
        if !(p_ap > 0.0) {
            return Err(Error::CgIndefinite { curvature: p_ap });
        }
        let alpha = rz / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        r_norm = norm(&r);
        history.push(r_norm / b_norm);
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if r_norm <= tol * b_norm {
        return Ok((x, max_iter));
    }
    let tail: Vec<f64> = history.iter().rev().take(5).rev().copied().collect();
    Err(Error::CgNoConvergence { iters: max_iter, residual: r_norm / b_norm, tail })
}

/// Divergence-guarded CG for severely ill-conditioned symmetric systems.
///
/// Behaves like [`cg`], but tracks the best iterate seen so far and restarts
/// from it (discarding the Krylov history) when the residual grows past 10⁴×
/// the best: rounding noise projected onto near-null modes makes plain CG
/// blow up *after* reaching its attainable accuracy, and the guard turns that
/// failure mode into a clean stop.  Returns the best iterate and its relative
/// residual on success; on failure the error reports the best residual
/// reached.
pub fn cg_guarded<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert_eq!(diag.len(), b.len());
    let prec = |r: &[f64], z: &mut [f64]| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(diag) {
            *zi = ri / di;
        }
    };
    cg_guarded_prec(apply, prec, b, x0, tol, max_iter)
}

/// As [`cg_guarded`] but with a general SPD preconditioner: `prec(r, z)` must
/// overwrite `z` with M⁻¹·r for a fixed symmetric positive definite M⁻¹.
pub fn cg_guarded_prec<F, P>(
    mut apply: F,
    mut prec: P,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)>
where
    F: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let mut best = match x0 {
        Some(v) => {
            assert_eq!(v.len(), n);
            v.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    apply(&best, &mut ax);
    let mut best_res = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    let mut total_iters = 0usize;
    let mut history: Vec<f64> = Vec::new();
    let max_restarts = 40;
    'outer: for _segment in 0..=max_restarts {
        let mut x = best.clone();
        apply(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut z = vec![0.0; n];
        prec(&r, &mut z);
        let mut r = r;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let segment_start_best = best_res;
        while total_iters < max_iter {
            if best_res <= tol {
                return Ok((best, total_iters, best_res));
            }
            apply(&p, &mut ax);
            let p_ap = dot(&p, &ax);
            if !(p_ap > 0.0) {
                // numerically lost positivity: restart from the best iterate
                continue 'outer;
            }
            let alpha = rz / p_ap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ax[i];
            }
            total_iters += 1;
            let r_rel = norm(&r) / b_norm;
            history.push(r_rel);
            if r_rel < best_res {
                best_res = r_rel;
                best.copy_from_slice(&x);
            }
            if r_rel > 1e4 * best_res {
                if best_res >= 0.99 * segment_start_best {
                    // restarting no longer helps
                    break 'outer;
                }
                continue 'outer;
            }
            prec(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        break;
    }
    if best_res <= tol {
        return Ok((best, total_iters, best_res));
    }
    let tail: Vec<f64> = history.iter().rev().take(5).rev().copied().collect();
    Err(Error::CgNoConvergence { iters: total_iters, residual: best_res, tail })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
