//! Physical parameters and the couplings derived from them.
//!
//! All frequencies and rates are angular (rad/s). Configuration files carry
//! ordinary frequencies in Hz; the conversion happens in [`crate::cli`].
//!
//! The linear optomechanical coupling `g0` is absent on purpose: the model
//! assumes a membrane-in-the-middle style geometry in which it vanishes, so
//! the lowest surviving interaction is quadratic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// `π²/3 + 1/4`, the geometric factor relating the two quadratic couplings.
pub fn coupling_factor() -> f64 {
    PI * PI / 3.0 + 0.25
}

/// Full experiment configuration in angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Bare optical (electromagnetic) frequency, rad/s.
    pub omega_bare: f64,
    /// Bare mechanical frequency, rad/s.
    pub omega_m_bare: f64,
    /// Cavity decay rate, rad/s.
    pub kappa: f64,
    /// Mechanical decay rate, rad/s.
    pub gamma: f64,
    /// Standard quadratic coupling strength, rad/s.
    pub epsilon: f64,
    /// Incident photon flux `|α|`, 1/s.
    pub alpha_mag: f64,
    /// Drive phase `∠α`, radians.
    pub alpha_phase: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    /// When false the momentum-field coupling β is forced to zero.
    pub include_nonstandard: bool,
}

impl SystemParams {
    /// Superconducting electromechanics reference point, weak coupling:
    /// ω = Ω = 2π·720 kHz, κ = 2π·5.5 kHz, Γ = 2π·2.4 Hz, T = 40 mK,
    /// ε = 2π·5 Hz.
    pub fn reference_weak() -> Self {
        SystemParams {
            omega_bare: 2.0 * PI * 720e3,
            omega_m_bare: 2.0 * PI * 720e3,
            kappa: 2.0 * PI * 5.5e3,
            gamma: 2.0 * PI * 2.4,
            epsilon: 2.0 * PI * 5.0,
            alpha_mag: 0.0,
            alpha_phase: 0.0,
            temperature: 0.04,
            include_nonstandard: true,
        }
    }

    /// Complex drive amplitude `α`.
    pub fn alpha(&self) -> C64 {
        C64::from_polar(self.alpha_mag, self.alpha_phase)
    }

    /// Same system with the bare optical frequency set so that the effective
    /// optical and mechanical frequencies coincide exactly.
    ///
    /// The effective detuning `ω - Ω = ω̃ + ε/2 - Ω̃` does not depend on β, so
    /// this holds with and without the momentum-field term.
    pub fn tuned_to_resonance(mut self) -> Self {
        self.omega_bare = self.omega_m_bare - 0.5 * self.epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_bare", self.omega_bare),
            ("Omega_bare", self.omega_m_bare),
            ("kappa", self.kappa),
            ("Gamma", self.gamma),
        ];
        for (field, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("epsilon", self.epsilon),
            ("alpha_mag", self.alpha_mag),
            ("temperature", self.temperature),
        ];
        for (field, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.alpha_phase.is_finite() {
            return Err(invalid("alpha_phase", "must be finite".into()));
        }
        if self.kappa >= self.omega_bare {
            return Err(invalid(
                "kappa",
                format!("must be below omega_bare ({} >= {})", self.kappa, self.omega_bare),
            ));
        }
        if self.gamma >= self.omega_m_bare {
            return Err(invalid(
                "Gamma",
                format!("must be below Omega_bare ({} >= {})", self.gamma, self.omega_m_bare),
            ));
        }
        Ok(())
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidParam { field, reason }
}

/// Couplings and effective frequencies derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// `ρ = ½(π²/3 + ¼)(Ω̃/ω̃)²`, always reported even when β is switched off.
    pub rho: f64,
    /// Momentum-field coupling, rad/s.
    pub beta: f64,
    /// `ε + β`, rad/s.
    pub zeta: f64,
    /// `ε - β`, rad/s.
    pub chi: f64,
    /// Effective optical frequency `ω̃ + ε/2 + β`, rad/s.
    pub omega_eff: f64,
    /// Effective mechanical frequency `Ω̃ + β`, rad/s.
    pub omega_m_eff: f64,
    pub epsilon: f64,
    pub nonstandard: bool,
}

impl DerivedParams {
    /// ρ as it enters the equations of motion: `2β/ε`, i.e. ρ with the
    /// momentum-field term on and zero with it off.
    pub fn rho_eff(&self) -> f64 {
        if self.nonstandard {
            self.rho
        } else {
            0.0
        }
    }
}

pub fn derive_params(p: &SystemParams) -> Result<DerivedParams> {
    p.validate()?;
    let ratio = p.omega_m_bare / p.omega_bare;
    let rho = 0.5 * coupling_factor() * ratio * ratio;
    let beta = if p.include_nonstandard {
        0.5 * rho * p.epsilon
    } else {
        0.0
    };
    Ok(DerivedParams {
        rho,
        beta,
        zeta: p.epsilon + beta,
        chi: p.epsilon - beta,
        omega_eff: p.omega_bare + 0.5 * p.epsilon + beta,
        omega_m_eff: p.omega_m_bare + beta,
        epsilon: p.epsilon,
        nonstandard: p.include_nonstandard,
    })
}

/// Mechanical-to-optical frequency ratio `½√(π²/3 + ¼)` separating the large
/// and small mechanical frequency regimes.
pub fn critical_frequency_ratio() -> f64 {
    0.5 * coupling_factor().sqrt()
}

/// Bose occupancy `1/(exp(ħΩ/k_B T) - 1)`; zero at `T = 0`.
pub fn thermal_occupancy(omega_m_eff: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega_m_eff / (K_B * temperature);
    1.0 / x.exp_m1()
}
