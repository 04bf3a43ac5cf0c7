//! Small root-finding helpers shared by the steady-state solvers.

use nalgebra::{DMatrix, DVector};

/// Bisection on a bracket with `f(lo) < 0 < f(hi)` (or the reverse).
///
/// Runs until the bracket stops shrinking in floating point.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All sign changes of `f` on a sorted grid, as adjacent point pairs.
pub fn sign_changes<F: FnMut(f64) -> f64>(mut f: F, grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in grid {
        let fx = f(x);
        if !fx.is_finite() {
            prev = None;
            continue;
        }
        if let Some((px, pf)) = prev {
            if pf == 0.0 || (pf < 0.0) != (fx < 0.0) {
                out.push((px, x));
            }
        }
        prev = Some((x, fx));
    }
    out
}

/// Damped Newton iteration with a forward-difference Jacobian.
///
/// `residual` maps the unknowns to the (scaled) residual vector of the same
/// length. Steps are halved until the residual norm decreases. Returns the
/// best point found and its residual max-norm.
pub fn damped_newton<F>(residual: F, x0: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let mut best = norm(&r);
    if !best.is_finite() {
        return (x, f64::INFINITY);
    }

    for _ in 0..max_iter {
        if best < tol {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1e-12);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };

        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
            let rt = residual(&trial);
            let nt = norm(&rt);
            if nt.is_finite() && nt < best {
                x = trial;
                r = rt;
                best = nt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, best)
}
