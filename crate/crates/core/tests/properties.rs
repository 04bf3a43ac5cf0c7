use std::f64::consts::PI;

use nalgebra::Matrix6;
use proptest::prelude::*;
use quadom::cli::{Format, Ratio, RunConfig};
use quadom::dynamics::{build_drift, drift_matrix, eigenvalues};
use quadom::fock_oracle::verify_closure;
use quadom::model::{derive_params, DerivedParams, SystemParams};
use quadom::spectra::{evaluate_s_aa, input_weights, s_cc_at, scattering_matrix, GaussianPeak, ModeFlags};
use quadom::steady_state::{
    classify_branch, off_resonant_residuals, resonant_residuals, solve, solve_off_resonant, Branch,
    ResonanceSign, SolverOptions, SteadyState,
};
use quadom::C64;

fn params() -> impl Strategy<Value = SystemParams> {
    (
        1.0f64..10.0,
        1.0f64..30.0,
        0.01f64..0.9,
        0.001f64..0.01,
        0.0f64..0.5,
        0.0f64..2.0 * PI,
        any::<bool>(),
    )
        .prop_map(|(w, r, k, g, e, ph, on)| SystemParams {
            omega_bare: w,
            omega_m_bare: r * w / 10.0,
            kappa: k,
            gamma: g,
            epsilon: e,
            alpha_mag: 0.0,
            alpha_phase: ph,
            temperature: 0.0,
            include_nonstandard: on,
        })
}

/// The reference system at a random frequency ratio away from resonance.
fn off_resonant() -> impl Strategy<Value = SystemParams> {
    (prop_oneof![0.1f64..0.9, 1.1f64..5.0], 0.0f64..4.5, 0.5f64..500.0, any::<bool>()).prop_map(
        |(r, log_a, eps_hz, on)| SystemParams {
            omega_m_bare: r * 2.0 * PI * 720e3,
            epsilon: 2.0 * PI * eps_hz,
            alpha_mag: 10f64.powf(log_a),
            include_nonstandard: on,
            ..SystemParams::reference_weak()
        },
    )
}

fn max_abs(m: &Matrix6<C64>) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

fn swap_perm() -> Matrix6<C64> {
    let mut p = Matrix6::<C64>::zeros();
    for (r, c) in [(0, 1), (1, 0), (2, 2), (3, 4), (4, 3), (5, 5)] {
        p[(r, c)] = C64::new(1.0, 0.0);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_scales_with_ratio_squared(p in params(), s in 0.2f64..5.0) {
        let p = SystemParams { include_nonstandard: true, epsilon: p.epsilon.max(1e-3), ..p };
        let q = SystemParams { omega_m_bare: s * p.omega_m_bare, ..p };
        let (a, b) = (derive_params(&p).unwrap(), derive_params(&q).unwrap());
        prop_assert!((b.beta / a.beta - s * s).abs() < 1e-12 * s * s);
    }

    #[test]
    fn beta_over_epsilon_independent_of_epsilon(p in params(), e2 in 1e-3f64..10.0) {
        let p = SystemParams { include_nonstandard: true, epsilon: p.epsilon.max(1e-3), ..p };
        let q = SystemParams { epsilon: e2, ..p };
        let (a, b) = (derive_params(&p).unwrap(), derive_params(&q).unwrap());
        prop_assert!((a.beta / p.epsilon - b.beta / e2).abs() < 1e-12 * a.rho);
    }

    #[test]
    fn effective_frequencies_not_below_bare(p in params()) {
        let d = derive_params(&p).unwrap();
        prop_assert!(d.omega_eff >= p.omega_bare);
        prop_assert!(d.omega_m_eff >= p.omega_m_bare);
        if !p.include_nonstandard {
            prop_assert_eq!(d.beta, 0.0);
        }
    }

    #[test]
    fn off_resonant_residuals_small(p in off_resonant()) {
        let d = derive_params(&p).unwrap();
        prop_assert_eq!(classify_branch(&d, 1e-6), Branch::OffResonant);
        let s = solve_off_resonant(&p, &d).unwrap();
        let r = off_resonant_residuals(&p, &d, s.n_bar, s.m_bar);
        prop_assert!(r[0] < 1e-9 && r[1] < 1e-9, "{:?}", r);
        prop_assert!(s.m_bar >= 1.0 && s.n_bar > 0.0);
    }

    #[test]
    fn resonant_residuals_small(log_a in 0.0f64..4.0, eps_hz in 0.5f64..50.0, on in any::<bool>()) {
        let p = SystemParams {
            epsilon: 2.0 * PI * eps_hz,
            alpha_mag: 10f64.powf(log_a),
            include_nonstandard: on,
            ..SystemParams::reference_weak()
        }
        .tuned_to_resonance();
        let d = derive_params(&p).unwrap();
        let s = solve(&p, &d, &SolverOptions::default()).unwrap();
        prop_assert_eq!(s.branch, Branch::Resonant);
        let r = resonant_residuals(&p, &d, &s, ResonanceSign::Plus);
        prop_assert!(r[0] < 1e-9 && r[1] < 1e-9 && r[2] < 1e-9, "{:?}", r);
    }

    #[test]
    fn off_resonant_monotone_in_drive(p in off_resonant(), f in 1.001f64..3.0) {
        let q = SystemParams { alpha_mag: f * p.alpha_mag, ..p };
        let d = derive_params(&p).unwrap();
        let a = solve_off_resonant(&p, &d).unwrap();
        let b = solve_off_resonant(&q, &d).unwrap();
        prop_assert!(b.m_bar > a.m_bar && b.n_bar > a.n_bar);
    }

    #[test]
    fn drift_trace_identity(p in params(), n in 0.0f64..100.0, m in 0.0f64..100.0) {
        let d = derive_params(&p).unwrap();
        let tr = drift_matrix(&p, &d, n, m).trace();
        let want = -3.0 * (p.kappa + p.gamma);
        prop_assert!((tr.re - want).abs() < 1e-12 * want.abs());
        prop_assert!(tr.im.abs() < 1e-9 * (1.0 + d.omega_eff + d.omega_m_eff));
    }

    #[test]
    fn drift_affine_in_beta(p in params(), b1 in 0.0f64..1.0, b2 in 0.0f64..1.0, n in 0.0f64..20.0, m in 0.0f64..20.0) {
        let base = derive_params(&p).unwrap();
        let at = |b: f64| {
            let d = DerivedParams {
                beta: b,
                zeta: p.epsilon + b,
                chi: p.epsilon - b,
                omega_eff: p.omega_bare + 0.5 * p.epsilon + b,
                omega_m_eff: p.omega_m_bare + b,
                ..base
            };
            drift_matrix(&p, &d, n, m)
        };
        let mid = at(0.5 * (b1 + b2));
        let avg = (at(b1) + at(b2)) * C64::new(0.5, 0.0);
        prop_assert!(max_abs(&(mid - avg)) < 1e-12 * (1.0 + max_abs(&mid)));
    }

    #[test]
    fn drift_conjugation_symmetry(p in params(), n in 0.0f64..50.0, m in 0.0f64..50.0) {
        let d = derive_params(&p).unwrap();
        let mm = drift_matrix(&p, &d, n, m);
        let perm = swap_perm();
        let back = perm * mm.map(|z| z.conj()) * perm;
        prop_assert!(max_abs(&(back - mm)) == 0.0);
    }

    #[test]
    fn spectrum_closed_under_conjugation(p in params(), n in 0.0f64..5.0, m in 1.0f64..5.0) {
        let d = derive_params(&p).unwrap();
        let ev = eigenvalues(&drift_matrix(&p, &d, n, m)).unwrap();
        let scale = ev.iter().fold(1.0f64, |a, z| a.max(z.norm()));
        for z in &ev {
            let closest = ev.iter().map(|y| (y - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(closest < 1e-6 * scale, "{z} has no partner in {ev:?}");
        }
    }

    #[test]
    fn s_cc_non_negative_and_channel_sum(
        p in params(), n in 0.0f64..5.0, m in 1.0f64..5.0, w in -40.0f64..40.0, lit in any::<bool>(),
    ) {
        let d = derive_params(&p).unwrap();
        let ds = build_drift(&p, &d, &SteadyState::imposed(n, m));
        let flags = ModeFlags { eq19_literal: lit, thermal_input: false };
        if let Ok(cc) = s_cc_at(&ds, w, m, flags) {
            prop_assert!(cc >= 0.0);
            let s = scattering_matrix(&ds, w).unwrap();
            let wt = input_weights(m, w);
            let mut sum = 0.0;
            for j in 0..5 {
                sum += wt[j] * s[(0, j)].norm_sqr();
            }
            sum += wt[5] * s[(0, if lit { 3 } else { 5 })].norm_sqr();
            prop_assert!((cc - sum).abs() <= 1e-12 * sum.max(1.0));
        }
    }

    #[test]
    fn s_cc_far_field_is_vacuum(p in params(), n in 0.0f64..5.0, m in 1.0f64..5.0) {
        let d = derive_params(&p).unwrap();
        let ds = build_drift(&p, &d, &SteadyState::imposed(n, m));
        let w = 1e9 * (1.0 + max_abs(&ds.matrix));
        let cc = s_cc_at(&ds, w, m, ModeFlags::default()).unwrap();
        prop_assert!((cc - 1.0).abs() < 1e-6);
        let cc = s_cc_at(&ds, -w, m, ModeFlags::default()).unwrap();
        prop_assert!(cc.abs() < 1e-6);
    }

    /// With β off the first channel decouples, so `S_CC` has a scalar form.
    #[test]
    fn beta_off_two_paths_agree(p in params(), n in 0.0f64..5.0, m in 1.0f64..5.0, w in 0.0f64..60.0) {
        let p = SystemParams { include_nonstandard: false, ..p };
        let d = derive_params(&p).unwrap();
        let ds = build_drift(&p, &d, &SteadyState::imposed(n, m));
        let m11 = ds.matrix[(0, 0)];
        let s11 = C64::new(1.0, 0.0) - C64::new(n * p.kappa, 0.0) / (m11 - C64::new(0.0, w));
        let cc = s_cc_at(&ds, w, m, ModeFlags::default()).unwrap();
        prop_assert!((cc - s11.norm_sqr()).abs() < 1e-12 * s11.norm_sqr().max(1.0));
    }

    #[test]
    fn s_aa_peak_at_half_frequency(s in 0.01f64..10.0, w0 in 1.0f64..1e6, frac in 1e-4f64..0.2) {
        let g = GaussianPeak { s, omega: w0, delta: frac * w0, residual: 0.0 };
        let peaks = [g];
        let at = |w: f64| evaluate_s_aa(&peaks, w);
        let c = 0.5 * w0;
        let h = 0.01 * frac * w0;
        prop_assert!(at(c) > at(c + h) && at(c) > at(c - h));
    }

    #[test]
    fn config_round_trip(
        f in 1.0f64..1e7, k in 1.0f64..1e5, a in 0.0f64..1e5, pts in 2usize..100,
        on in any::<bool>(), json in any::<bool>(), r in 0.1f64..5.0,
    ) {
        let cfg = RunConfig {
            optical_freq_hz: f,
            kappa_hz: k,
            alpha: a,
            alpha_points: pts,
            include_nonstandard: on,
            format: if json { Format::Json } else { Format::Csv },
            ratio_values: vec![Ratio::Resonant, Ratio::Value(r)],
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&cfg.render()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.content_hash(), cfg.content_hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn closure_holds_at_several_cutoffs(k in 0usize..3) {
        let n = [8, 16, 30][k];
        let rep = verify_closure(n).unwrap();
        prop_assert!(rep.max_interior() < 1e-12);
        prop_assert!(rep.cross_sector < 1e-12);
    }
}
