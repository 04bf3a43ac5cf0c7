//! Linearized fluctuation dynamics in the basis `(c, c†, n, d, d†, m)`.
//!
//! Around a steady state the fluctuations obey `dA/dt = M A - √γ A_in` with a
//! constant 6×6 drift matrix `M` and diagonal input coupling `γ`.

use nalgebra::{Matrix6, Schur, Vector6};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive_params, DerivedParams, SystemParams};
use crate::steady_state::SteadyState;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSystem {
    pub matrix: Matrix6<C64>,
    /// `[nκ, nκ, 4nκ, 2|d|Γ, 2|d|Γ, 4|d|Γ]`
    pub gamma_diag: Vector6<f64>,
    pub steady: SteadyState,
}

/// Drift matrix entries at populations `(n, m)`.
pub fn drift_matrix(p: &SystemParams, d: &DerivedParams, n: f64, m: f64) -> Matrix6<C64> {
    let i = C64::i();
    let z = C64::new(0.0, 0.0);
    let re = |x: f64| C64::new(x, 0.0);
    let (beta, zeta, chi) = (d.beta, d.zeta, d.chi);
    let (w, big_w) = (d.omega_eff, d.omega_m_eff);
    let (kappa, gamma) = (p.kappa, p.gamma);
    let nh = n + 0.5;
    let mh = m + 0.5;

    let c11 = i * 2.0 * (w - zeta * m) - kappa;
    let c22 = -i * 2.0 * (w - zeta * m) - kappa;
    let d44 = -i * 2.0 * (big_w + zeta * n) - gamma;
    let d55 = i * 2.0 * (big_w + zeta * n) - gamma;

    #[rustfmt::skip]
    let rows = [
        c11,                z,                  -i * beta * m,       i * beta * nh,  i * beta * nh,  -i * beta * nh,
        z,                  c22,                i * beta * m,        -i * beta * nh, -i * beta * nh, i * beta * nh,
        i * 2.0 * beta * m, -i * 2.0 * beta * m, re(-kappa),         z,              z,              z,
        i * beta * mh,      i * beta * mh,      -i * chi * mh,       d44,            z,              -i * chi * n,
        -i * beta * mh,     -i * beta * mh,     i * chi * mh,        z,              d55,            i * chi * n,
        z,                  z,                  z,                   i * 2.0 * chi * n, -i * 2.0 * chi * n, re(-gamma),
    ];
    Matrix6::from_row_slice(&rows)
}

pub fn noise_diag(p: &SystemParams, s: &SteadyState) -> Vector6<f64> {
    let nk = s.n_bar * p.kappa;
    let dg = s.d_bar.norm() * p.gamma;
    Vector6::new(nk, nk, 4.0 * nk, 2.0 * dg, 2.0 * dg, 4.0 * dg)
}

pub fn build_drift(p: &SystemParams, d: &DerivedParams, s: &SteadyState) -> DriftSystem {
    DriftSystem {
        matrix: drift_matrix(p, d, s.n_bar, s.m_bar),
        gamma_diag: noise_diag(p, s),
        steady: *s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityState {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Sorted by imaginary part, then real part.
    pub eigenvalues: Vec<C64>,
    /// All real parts strictly negative and clear of the marginal band.
    pub stable: bool,
    /// Largest real part, rad/s.
    pub margin: f64,
    pub state: StabilityState,
}

pub fn eigenvalues(m: &Matrix6<C64>) -> Result<Vec<C64>> {
    let schur = Schur::try_new(*m, 1e-15, 10_000).ok_or(Error::Eigensolver)?;
    let (_, t) = schur.unpack();
    let mut ev: Vec<C64> = (0..6).map(|k| t[(k, k)]).collect();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver);
    }
    ev.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    Ok(ev)
}

pub fn stability(ds: &DriftSystem) -> Result<StabilityReport> {
    stability_of(&ds.matrix)
}

pub fn stability_of(m: &Matrix6<C64>) -> Result<StabilityReport> {
    let ev = eigenvalues(m)?;
    let margin = ev.iter().fold(f64::NEG_INFINITY, |a, z| a.max(z.re));
    let band = 1e-12 * m.norm();
    let state = if margin.abs() <= band {
        StabilityState::Marginal
    } else if margin < 0.0 {
        StabilityState::Stable
    } else {
        StabilityState::Unstable
    };
    Ok(StabilityReport {
        eigenvalues: ev,
        stable: state == StabilityState::Stable,
        margin,
        state,
    })
}

/// Stability of each `(n, m)` cell with the populations imposed directly.
/// Indexed `[i_n][i_m]`; a failing cell does not abort the map.
pub fn stability_map(
    p: &SystemParams,
    d: &DerivedParams,
    n_grid: &[f64],
    m_grid: &[f64],
) -> Vec<Vec<Result<StabilityReport>>> {
    n_grid
        .par_iter()
        .map(|&n| {
            m_grid
                .iter()
                .map(|&m| {
                    let s = SteadyState::imposed(n, m);
                    stability(&build_drift(p, d, &s))
                })
                .collect()
        })
        .collect()
}

/// Smallest ε in `[eps_lo, eps_hi]` at which the imposed cell `(n, m)` turns
/// unstable, located by bisection to relative width `rel_tol`.
///
/// Returns `Ok(None)` if the cell is already unstable at `eps_lo` or still
/// stable at `eps_hi`.
pub fn instability_threshold(
    p: &SystemParams,
    n: f64,
    m: f64,
    eps_lo: f64,
    eps_hi: f64,
    rel_tol: f64,
) -> Result<Option<f64>> {
    let margin_at = |eps: f64| -> Result<f64> {
        let q = SystemParams { epsilon: eps, ..*p };
        let d = derive_params(&q)?;
        let s = SteadyState::imposed(n, m);
        Ok(stability(&build_drift(&q, &d, &s))?.margin)
    };
    if margin_at(eps_lo)? >= 0.0 || margin_at(eps_hi)? < 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (eps_lo, eps_hi);
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if margin_at(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::Branch;

    fn free(eps: f64) -> (SystemParams, DerivedParams) {
        let p = SystemParams {
            epsilon: eps,
            ..SystemParams::reference_weak()
        };
        let d = derive_params(&p).unwrap();
        (p, d)
    }

    #[test]
    fn uncoupled_matrix_is_diagonal() {
        let (p, d) = free(0.0);
        let m = drift_matrix(&p, &d, 3.0, 5.0);
        let i = C64::i();
        let diag = [
            i * 2.0 * d.omega_eff - p.kappa,
            -i * 2.0 * d.omega_eff - p.kappa,
            C64::new(-p.kappa, 0.0),
            -i * 2.0 * d.omega_m_eff - p.gamma,
            i * 2.0 * d.omega_m_eff - p.gamma,
            C64::new(-p.gamma, 0.0),
        ];
        for r in 0..6 {
            for c in 0..6 {
                let want = if r == c { diag[r] } else { C64::new(0.0, 0.0) };
                assert_eq!(m[(r, c)], want);
            }
        }
    }

    #[test]
    fn uncoupled_eigenvalues_exact() {
        let (p, d) = free(0.0);
        let r = stability_of(&drift_matrix(&p, &d, 1.0, 1.0)).unwrap();
        assert!(r.stable);
        assert_eq!(r.state, StabilityState::Stable);
        assert!((r.margin + p.gamma).abs() < 1e-12 * p.gamma);
    }

    #[test]
    fn trace_identity() {
        let (p, d) = free(2.0 * std::f64::consts::PI * 500.0);
        let m = drift_matrix(&p, &d, 17.0, 3.5);
        let tr = m.trace();
        let want = -3.0 * (p.kappa + p.gamma);
        assert!((tr.re - want).abs() < 1e-12 * want.abs());
        assert!(tr.im.abs() < 1e-9);
    }

    #[test]
    fn lossless_uncoupled_is_marginal() {
        let p = SystemParams {
            kappa: 1e-300,
            gamma: 1e-300,
            epsilon: 0.0,
            ..SystemParams::reference_weak()
        };
        let d = derive_params(&p).unwrap();
        let r = stability_of(&drift_matrix(&p, &d, 0.0, 0.0)).unwrap();
        assert_eq!(r.state, StabilityState::Marginal);
        assert!(!r.stable);
    }

    #[test]
    fn noise_matrix_vanishes_at_zero_population() {
        let (p, d) = free(10.0);
        let ds = build_drift(&p, &d, &SteadyState::zero(Branch::OffResonant));
        assert_eq!(ds.gamma_diag, Vector6::zeros());
    }

    #[test]
    fn map_zero_cell_stable() {
        let (p, d) = free(2.0 * std::f64::consts::PI * 5.0);
        let map = stability_map(&p, &d, &[0.0, 1.0], &[0.0, 2.0]);
        assert!(map[0][0].as_ref().unwrap().stable);
        assert_eq!(map.len(), 2);
        assert_eq!(map[1].len(), 2);
    }
}
