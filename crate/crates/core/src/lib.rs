//! Quadratic optomechanics with standard position-field and non-standard
//! momentum-field couplings.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`model`] turns the experiment configuration into derived couplings and
//!    effective frequencies.
//! 2. [`steady_state`] solves the nonlinear algebraic balance for the mean
//!    photon and phonon populations, with a mean-field integrator as a
//!    cross-check.
//! 3. [`dynamics`] linearizes the second-order operator basis
//!    `{c, c†, n, d, d†, m}` into a 6×6 drift matrix and checks stability.
//! 4. [`spectra`] builds the scattering matrix and output spectral density,
//!    fits Gaussian peaks and recovers the first-order spectrum.
//! 5. [`fock_oracle`] verifies the operator algebra on a truncated Fock space.
//!
//! The [`cli`] module holds configuration parsing and the command drivers used
//! by the `quadom` binary.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fock_oracle;
pub mod model;
mod ode;
mod roots;
pub mod spectra;
pub mod steady_state;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
