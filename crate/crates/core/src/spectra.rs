//! Scattering matrix, output spectral density and Gaussian peak analysis.
//!
//! Input-output relations `A_out = A_in + √γ A` combined with the linearized
//! dynamics give `S(w) = I - √γ (M - iwI)⁻¹ √γ`. The measured spectrum of the
//! `c` channel is the first row of `S` weighted by the input occupancies.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, Matrix6, OMatrix, Vector3, U3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{eigenvalues, DriftSystem};
use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFlags {
    /// Weight `m + ½` multiplies `|S₁₄|²` instead of `|S₁₆|²`.
    pub eq19_literal: bool,
    /// Phonon input occupancy is the thermal `n_th` instead of `m`.
    pub thermal_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianPeak {
    pub s: f64,
    pub omega: f64,
    pub delta: f64,
    /// RMS misfit over the fit window, in units of the spectrum.
    pub residual: f64,
}

impl GaussianPeak {
    pub fn eval(&self, w: f64) -> f64 {
        let x = (w - self.omega) / self.delta;
        self.s * (-x * x).exp()
    }

    pub fn hwhm(&self) -> f64 {
        self.delta * std::f64::consts::LN_2.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freq_grid: Vec<f64>,
    /// NaN where `M - iwI` was singular.
    pub s_cc: Vec<f64>,
    pub s_aa: Vec<f64>,
    pub peaks: Vec<GaussianPeak>,
    pub mode_flags: ModeFlags,
    pub singular_points: usize,
    pub overlap: bool,
}

/// Input occupancies for the six channels at probe frequency `w`.
pub fn input_weights(occupancy: f64, w: f64) -> [f64; 6] {
    let m = occupancy;
    if w >= 0.0 {
        [1.0, 0.0, 0.5, m + 1.0, m, m + 0.5]
    } else {
        [0.0, 1.0, 0.5, m, m + 1.0, m + 0.5]
    }
}

/// Phonon occupancy entering [`input_weights`].
pub fn weight_occupancy(ds: &DriftSystem, flags: ModeFlags, n_th: f64) -> f64 {
    if flags.thermal_input {
        n_th
    } else {
        ds.steady.m_bar
    }
}

pub fn scattering_matrix(ds: &DriftSystem, w: f64) -> Result<Matrix6<C64>> {
    let shifted = ds.matrix - Matrix6::from_diagonal_element(C64::new(0.0, w));
    let inv = shifted.try_inverse().ok_or(Error::SingularMatrix { w })?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularMatrix { w });
    }
    let sg = ds.gamma_diag.map(f64::sqrt);
    let mut s = Matrix6::<C64>::identity();
    for r in 0..6 {
        for c in 0..6 {
            s[(r, c)] -= inv[(r, c)] * (sg[r] * sg[c]);
        }
    }
    Ok(s)
}

/// `S_CC(w)` from the first row of `S`.
pub fn s_cc_at(ds: &DriftSystem, w: f64, occupancy: f64, flags: ModeFlags) -> Result<f64> {
    let s = scattering_matrix(ds, w)?;
    let wt = input_weights(occupancy, w);
    let mag = |j: usize| s[(0, j)].norm_sqr();
    let last = if flags.eq19_literal { mag(3) } else { mag(5) };
    Ok(wt[0] * mag(0) + wt[1] * mag(1) + wt[2] * mag(2) + wt[3] * mag(3) + wt[4] * mag(4) + wt[5] * last)
}

/// Evaluates `S_CC` on `grid` in parallel. Singular points become NaN and are
/// counted; `s_aa` and `peaks` are left empty.
pub fn output_spectrum(ds: &DriftSystem, grid: &[f64], flags: ModeFlags, n_th: f64) -> Spectrum {
    let occ = weight_occupancy(ds, flags, n_th);
    let s_cc: Vec<f64> = grid
        .par_iter()
        .map(|&w| s_cc_at(ds, w, occ, flags).unwrap_or(f64::NAN))
        .collect();
    let singular_points = s_cc.iter().filter(|v| v.is_nan()).count();
    Spectrum {
        freq_grid: grid.to_vec(),
        s_cc,
        s_aa: Vec::new(),
        peaks: Vec::new(),
        mode_flags: flags,
        singular_points,
        overlap: false,
    }
}

/// Uniform grid of `points` samples on `[w_min, w_max]`, refined with
/// log-spaced samples around every drift eigenfrequency inside the range.
pub fn default_grid(systems: &[&DriftSystem], w_min: f64, w_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let step = (w_max - w_min) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|k| w_min + step * k as f64).collect();
    for ds in systems {
        let Ok(ev) = eigenvalues(&ds.matrix) else {
            continue;
        };
        for lam in ev {
            let centre = lam.im;
            let width = lam.re.abs();
            if !(w_min..=w_max).contains(&centre) || width == 0.0 {
                continue;
            }
            grid.push(centre);
            for k in -16..=24 {
                let off = width * 10f64.powf(k as f64 / 8.0);
                for x in [centre - off, centre + off] {
                    if (w_min..=w_max).contains(&x) {
                        grid.push(x);
                    }
                }
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Far-field level subtracted before detection and fitting.
    pub baseline: f64,
    /// Minimum prominence as a fraction of the largest excess over baseline.
    pub prominence: f64,
    pub min_samples: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            baseline: 0.0,
            prominence: 1e-3,
            min_samples: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakFit {
    /// Sorted by centre.
    pub peaks: Vec<GaussianPeak>,
    /// Fit windows intersect.
    pub overlap: bool,
    /// Candidates skipped for having fewer than `min_samples` in their window.
    pub unresolved: usize,
}

struct GaussFit<'a> {
    x: &'a [f64],
    y: &'a [f64],
    p: Vector3<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U3> for GaussFit<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U3>;
    type ParameterStorage = Owned<f64, U3>;

    fn set_params(&mut self, p: &Vector3<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector3<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (s, c, w) = (self.p[0], self.p[1], self.p[2]);
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| {
                let u = (x - c) / w;
                s * (-u * u).exp() - y
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U3>> {
        let (s, c, w) = (self.p[0], self.p[1], self.p[2]);
        let mut j = OMatrix::<f64, Dyn, U3>::zeros(self.x.len());
        for (r, &x) in self.x.iter().enumerate() {
            let u = (x - c) / w;
            let e = (-u * u).exp();
            j[(r, 0)] = e;
            j[(r, 1)] = s * e * 2.0 * u / w;
            j[(r, 2)] = s * e * 2.0 * u * u / w;
        }
        Some(j)
    }
}

fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left_min = h;
    let mut left_higher = false;
    for k in (0..i).rev() {
        if y[k] > h {
            left_higher = true;
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = h;
    let mut right_higher = false;
    for &v in &y[i + 1..] {
        if v > h {
            right_higher = true;
            break;
        }
        right_min = right_min.min(v);
    }
    let saddle = match (left_higher, right_higher) {
        (true, true) => left_min.max(right_min),
        (true, false) => left_min,
        (false, true) => right_min,
        (false, false) => left_min.min(right_min),
    };
    h - saddle
}

/// Detects local maxima above the prominence threshold and fits
/// `s exp(-(w-ω)²/Δ²)` to each on a window of ±3 initial half-widths.
///
/// NaN samples are ignored.
pub fn fit_peaks(grid: &[f64], values: &[f64], opts: &PeakOptions) -> PeakFit {
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(&w, &v)| (w, v - opts.baseline))
        .collect();
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut fit = PeakFit {
        peaks: Vec::new(),
        overlap: false,
        unresolved: 0,
    };
    let top = y.iter().fold(0.0f64, |a, v| a.max(*v));
    if y.len() < 3 || top <= 0.0 {
        return fit;
    }
    let threshold = opts.prominence * top;

    let mut i = 1;
    while i + 1 < y.len() {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            i += 1;
            continue;
        }
        // plateau: take its middle and skip past it
        let mut j = i;
        while j + 1 < y.len() && y[j + 1] == y[i] {
            j += 1;
        }
        let peak = (i + j) / 2;
        let next = j + 1;
        if y[peak] <= 0.0 || prominence(&y, peak) < threshold {
            i = next;
            continue;
        }
        if let Some(g) = fit_one(&x, &y, peak, opts.min_samples) {
            fit.peaks.push(g);
        } else {
            fit.unresolved += 1;
        }
        i = next;
    }

    fit.peaks.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    fit.overlap = fit
        .peaks
        .windows(2)
        .any(|w| w[0].omega + 3.0 * w[0].hwhm() > w[1].omega - 3.0 * w[1].hwhm());
    fit
}

fn fit_one(x: &[f64], y: &[f64], peak: usize, min_samples: usize) -> Option<GaussianPeak> {
    let h = y[peak];
    let half = 0.5 * h;
    let left = (0..peak).rev().find(|&k| y[k] < half).map(|k| x[peak] - x[k]);
    let right = (peak + 1..y.len()).find(|&k| y[k] < half).map(|k| x[k] - x[peak]);
    let hw = match (left, right) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return None,
    };
    let lo = x[peak] - 3.0 * hw;
    let hi = x[peak] + 3.0 * hw;
    let idx: Vec<usize> = (0..x.len()).filter(|&k| x[k] >= lo && x[k] <= hi).collect();
    if idx.len() < min_samples {
        return None;
    }
    // Work in units of the peak height and initial half-width.
    let xs: Vec<f64> = idx.iter().map(|&k| (x[k] - x[peak]) / hw).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| y[k] / h).collect();
    let problem = GaussFit {
        x: &xs,
        y: &ys,
        p: Vector3::new(1.0, 0.0, 1.0 / std::f64::consts::LN_2.sqrt()),
    };
    let (solved, report) = LevenbergMarquardt::new()
        .with_tol(1e-15)
        .with_patience(400)
        .minimize(problem);
    if !report.termination.was_successful() {
        return None;
    }
    let p = solved.p;
    let g = GaussianPeak {
        s: p[0] * h,
        omega: x[peak] + p[1] * hw,
        delta: p[2].abs() * hw,
        residual: h * (2.0 * report.objective_function / xs.len() as f64).sqrt(),
    };
    let inside = g.omega >= x[0] && g.omega <= x[x.len() - 1];
    (g.s > 0.0 && g.delta > 0.0 && inside).then_some(g)
}

/// Recovered first-order spectrum
/// `S_AA(w) = 2π√π Σ (s ω²/Δ) exp(-(w - ω/2)²/(2Δ²))`.
pub fn evaluate_s_aa(peaks: &[GaussianPeak], w: f64) -> f64 {
    let pref = 2.0 * std::f64::consts::PI * std::f64::consts::PI.sqrt();
    peaks
        .iter()
        .map(|p| {
            let x = w - 0.5 * p.omega;
            pref * p.s * p.omega * p.omega / p.delta * (-x * x / (2.0 * p.delta * p.delta)).exp()
        })
        .sum()
}

pub fn recover_s_aa(peaks: &[GaussianPeak], grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&w| evaluate_s_aa(peaks, w)).collect()
}

/// Fills `peaks`, `overlap` and `s_aa` (sampled at the same grid) in place.
pub fn analyze(spec: &mut Spectrum, opts: &PeakOptions) -> PeakFit {
    let fit = fit_peaks(&spec.freq_grid, &spec.s_cc, opts);
    spec.peaks = fit.peaks.clone();
    spec.overlap = fit.overlap;
    spec.s_aa = recover_s_aa(&spec.peaks, &spec.freq_grid);
    fit
}

/// `‖a - b‖ / ‖b‖` in trapezoidal L² over `grid ∩ [lo, hi]`, skipping NaNs.
pub fn relative_l2(grid: &[f64], a: &[f64], b: &[f64], lo: f64, hi: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let pts: Vec<(f64, f64, f64)> = grid
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(w, (x, y))| **w >= lo && **w <= hi && x.is_finite() && y.is_finite())
        .map(|(w, (x, y))| (*w, *x, *y))
        .collect();
    for pair in pts.windows(2) {
        let (w0, a0, b0) = pair[0];
        let (w1, a1, b1) = pair[1];
        let h = 0.5 * (w1 - w0);
        num += h * ((a0 - b0).powi(2) + (a1 - b1).powi(2));
        den += h * (b0 * b0 + b1 * b1);
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_drift;
    use crate::model::{derive_params, SystemParams};
    use crate::steady_state::{Branch, SteadyState};

    fn lin(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn identity_when_uncoupled_to_baths() {
        let p = SystemParams::reference_weak();
        let d = derive_params(&p).unwrap();
        let ds = build_drift(&p, &d, &SteadyState::zero(Branch::OffResonant));
        let s = scattering_matrix(&ds, 1.234e6).unwrap();
        assert_eq!(s, Matrix6::identity());
        let spec = output_spectrum(&ds, &[0.0, 1e6, 1e7], ModeFlags::default(), 0.0);
        assert!(spec.s_cc.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_gaussian_round_trip() {
        let x = lin(0.0, 2.0, 2001);
        let y: Vec<f64> = x.iter().map(|&w| (-((w - 1.0) / 0.1f64).powi(2)).exp()).collect();
        let fit = fit_peaks(&x, &y, &PeakOptions::default());
        assert_eq!(fit.peaks.len(), 1);
        let g = &fit.peaks[0];
        assert!((g.s - 1.0).abs() < 1e-6);
        assert!((g.omega - 1.0).abs() < 1e-6);
        assert!((g.delta - 0.1).abs() < 1e-6);
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let x = lin(0.0, 1.0, 100);
        let y = vec![1.0; 100];
        let opts = PeakOptions {
            baseline: 1.0,
            ..PeakOptions::default()
        };
        assert!(fit_peaks(&x, &y, &opts).peaks.is_empty());
        assert!(fit_peaks(&x, &y, &PeakOptions::default()).peaks.is_empty());
    }

    #[test]
    fn s_aa_single_peak() {
        let g = GaussianPeak {
            s: 0.3,
            omega: 4.0,
            delta: 0.2,
            residual: 0.0,
        };
        let pref = 2.0 * std::f64::consts::PI * std::f64::consts::PI.sqrt();
        let top = evaluate_s_aa(std::slice::from_ref(&g), 2.0);
        assert!((top - pref * 0.3 * 16.0 / 0.2).abs() < 1e-12 * top);
        assert_eq!(recover_s_aa(&[], &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn relative_l2_basics() {
        let x = lin(0.0, 1.0, 11);
        let a = vec![2.0; 11];
        let b = vec![1.0; 11];
        assert!((relative_l2(&x, &a, &b, 0.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(relative_l2(&x, &b, &b, 0.0, 1.0), 0.0);
    }
}
