//! Steady-state photon and phonon populations.
//!
//! Off resonance the balance reduces to the pair
//!
//! ```text
//! |α|²     = ε²(1+ρ)² m² n
//! n |α|²   = ε² (m² - m)
//! ```
//!
//! which collapses to the scalar quartic `m³(m-1) = |α|⁴ / (ε⁴(1+ρ)²)`.
//! At optomechanical resonance (`ω = ±Ω`) the pair amplitude `d` survives and
//! four coupled equations hold; see [`resonant_residuals`] for their exact form.
//!
//! Throughout, ρ means [`DerivedParams::rho_eff`]: it vanishes when the
//! momentum-field term is switched off, because every ρ in the equations of
//! motion comes from β = ρε/2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DerivedParams, SystemParams};
use crate::ode::rk4_step;
use crate::roots::{bisect, damped_newton, sign_changes};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `ω = Ω`
    Resonant,
    /// `ω = -Ω`
    AntiResonant,
    OffResonant,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Resonant => "resonant",
            Branch::AntiResonant => "anti_resonant",
            Branch::OffResonant => "off_resonant",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "resonant" => Ok(Branch::Resonant),
            "anti_resonant" => Ok(Branch::AntiResonant),
            "off_resonant" => Ok(Branch::OffResonant),
            other => Err(format!("unknown branch `{other}`")),
        }
    }
}

/// Which Kronecker delta of the resonant system is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceSign {
    Plus,
    Minus,
}

impl ResonanceSign {
    fn branch(self) -> Branch {
        match self {
            ResonanceSign::Plus => Branch::Resonant,
            ResonanceSign::Minus => Branch::AntiResonant,
        }
    }

    fn sign(self) -> f64 {
        match self {
            ResonanceSign::Plus => 1.0,
            ResonanceSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub n_bar: f64,
    pub m_bar: f64,
    pub d_bar: C64,
    pub alpha_phase: f64,
    pub branch: Branch,
    /// Max relative residual of the equations the solver enforces.
    pub residual: f64,
    /// Relative residual of the photon-number balance `ṅ = 0` on the resonant
    /// branch. That equation over-determines the system and is reported, not
    /// enforced. Zero off resonance, where it only fixes `∠α`.
    pub photon_balance_residual: f64,
}

impl SteadyState {
    pub fn zero(branch: Branch) -> Self {
        SteadyState {
            n_bar: 0.0,
            m_bar: 0.0,
            d_bar: C64::new(0.0, 0.0),
            alpha_phase: 0.0,
            branch,
            residual: 0.0,
            photon_balance_residual: 0.0,
        }
    }

    /// Steady state with populations imposed directly, as used by stability
    /// maps. `|d|` follows the resonant constraint `m² - m = 4|d|²`.
    pub fn imposed(n_bar: f64, m_bar: f64) -> Self {
        let d_abs = if m_bar >= 1.0 {
            0.5 * (m_bar * (m_bar - 1.0)).sqrt()
        } else {
            0.0
        };
        SteadyState {
            n_bar,
            m_bar,
            d_bar: C64::new(d_abs, 0.0),
            ..SteadyState::zero(Branch::OffResonant)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Acceptance threshold on the relative residual.
    pub tol: f64,
    /// `|ω - Ω| <= resonance_tol · ω` selects the resonant branch.
    pub resonance_tol: f64,
    /// Forces a branch instead of classifying from the frequencies.
    pub branch: Option<Branch>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            resonance_tol: 1e-6,
            branch: None,
        }
    }
}

pub fn classify_branch(d: &DerivedParams, resonance_tol: f64) -> Branch {
    let scale = resonance_tol * d.omega_eff.abs();
    if (d.omega_eff - d.omega_m_eff).abs() <= scale {
        Branch::Resonant
    } else if (d.omega_eff + d.omega_m_eff).abs() <= scale {
        Branch::AntiResonant
    } else {
        Branch::OffResonant
    }
}

/// Classifies the branch (unless forced) and runs the matching solver.
pub fn solve(p: &SystemParams, d: &DerivedParams, opts: &SolverOptions) -> Result<SteadyState> {
    let branch = opts
        .branch
        .unwrap_or_else(|| classify_branch(d, opts.resonance_tol));
    let s = match branch {
        Branch::OffResonant => solve_off_resonant(p, d)?,
        Branch::Resonant => solve_resonant(p, d, ResonanceSign::Plus)?,
        Branch::AntiResonant => solve_resonant(p, d, ResonanceSign::Minus)?,
    };
    if s.residual > opts.tol {
        return Err(Error::NoConvergence {
            best_residual: s.residual,
        });
    }
    Ok(s)
}

fn rel(value: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    if scale == 0.0 {
        value.abs()
    } else {
        value.abs() / scale
    }
}

/// Relative residuals of the two off-resonant equations at `(n, m)`.
pub fn off_resonant_residuals(p: &SystemParams, d: &DerivedParams, n: f64, m: f64) -> [f64; 2] {
    let a2 = p.alpha_mag * p.alpha_mag;
    let e2 = p.epsilon * p.epsilon;
    let one_rho = 1.0 + d.rho_eff();
    let rhs1 = e2 * one_rho * one_rho * m * m * n;
    let lhs2 = n * a2;
    [
        rel(a2 - rhs1, &[a2, rhs1]),
        rel(lhs2 - e2 * (m * m - m), &[lhs2, e2 * m * m, e2 * m]),
    ]
}

/// Off-resonant steady state.
///
/// Solves for `u = m - 1` on a logarithmic scale so that the weak-drive limit
/// `m → 1` keeps full relative precision in `n = ε² m u / |α|²`.
pub fn solve_off_resonant(p: &SystemParams, d: &DerivedParams) -> Result<SteadyState> {
    if p.alpha_mag == 0.0 {
        return Ok(SteadyState::zero(Branch::OffResonant));
    }
    if p.epsilon == 0.0 {
        return Err(Error::DegenerateCoupling);
    }
    let one_rho = 1.0 + d.rho_eff();
    let q = (p.alpha_mag / p.epsilon).powi(2) / one_rho;
    let ln_rhs = 2.0 * q.ln();
    // ln(m³(m-1)) - ln(rhs) with m = 1 + e^t; increasing in t.
    let g = |t: f64| 3.0 * t.exp().ln_1p() + t - ln_rhs;

    let u = if ln_rhs < -600.0 {
        // (1+u)³ ≈ 1 to machine precision.
        ln_rhs.exp()
    } else {
        // Multistart scan over m ∈ [1, 1e8].
        let grid: Vec<f64> = (-700..=8).map(|k| (k as f64) * 10f64.ln()).collect();
        let g_hi = g(*grid.last().unwrap());
        if g_hi < 0.0 {
            return Err(Error::NoPhysicalRoot {
                f_lo: g(grid[0]),
                f_hi: g_hi,
            });
        }
        let hi_idx = grid.iter().position(|&t| g(t) >= 0.0).unwrap();
        let lo = if hi_idx == 0 { grid[0] - 50.0 } else { grid[hi_idx - 1] };
        bisect(g, lo, grid[hi_idx]).exp()
    };

    let m = 1.0 + u;
    let n = p.epsilon * p.epsilon * m * u / (p.alpha_mag * p.alpha_mag);
    let [r1, r2] = off_resonant_residuals(p, d, n, m);
    Ok(SteadyState {
        n_bar: n,
        m_bar: m,
        d_bar: C64::new(0.0, 0.0),
        alpha_phase: 0.0,
        branch: Branch::OffResonant,
        residual: r1.max(r2),
        photon_balance_residual: 0.0,
    })
}

/// Relative residuals of the four resonant equations, in order:
///
/// ```text
/// 1.  iα*√n = ½κn + iε[½(1+ρ)mn - ρ(n+½)D]          D = d (ω=Ω) or d* (ω=-Ω)
/// 2.  m² - m = 4|d|²
/// 3.  -Γd = iε[2(1+ρ)nd - ρ(m+½)n]
/// 4.  κn = i(α-α*)√n - i2β(d*-d)n·(±1)
/// ```
///
/// The first three form a square system in `(n, m, Re d, Im d, ∠α)`; the
/// fourth is the photon-number balance and over-determines it.
pub fn resonant_residuals(
    p: &SystemParams,
    d: &DerivedParams,
    s: &SteadyState,
    sign: ResonanceSign,
) -> [f64; 4] {
    let r = resonant_raw(p, d, s.n_bar, s.m_bar, s.d_bar, s.alpha_phase, sign);
    [
        rel(r.eq1.norm(), &r.scale1),
        rel(r.eq2, &r.scale2),
        rel(r.eq3.norm(), &r.scale3),
        rel(r.eq4, &r.scale4),
    ]
}

struct ResonantRaw {
    eq1: C64,
    scale1: [f64; 4],
    eq2: f64,
    scale2: [f64; 3],
    eq3: C64,
    scale3: [f64; 3],
    eq4: f64,
    scale4: [f64; 3],
}

fn resonant_raw(
    p: &SystemParams,
    d: &DerivedParams,
    n: f64,
    m: f64,
    dbar: C64,
    phase: f64,
    sign: ResonanceSign,
) -> ResonantRaw {
    let i = C64::i();
    let rho = d.rho_eff();
    let eps = p.epsilon;
    let alpha = C64::from_polar(p.alpha_mag, phase);
    let sqrt_n = n.max(0.0).sqrt();
    let pair = match sign {
        ResonanceSign::Plus => dbar,
        ResonanceSign::Minus => dbar.conj(),
    };

    let lhs1 = i * alpha.conj() * sqrt_n;
    let pop = 0.5 * (1.0 + rho) * m * n;
    let rhs1 = 0.5 * p.kappa * n + i * eps * (pop - rho * (n + 0.5) * pair);
    let eq1 = lhs1 - rhs1;

    let eq2 = m * m - m - 4.0 * dbar.norm_sqr();

    let lhs3 = -p.gamma * dbar;
    let rhs3 = i * eps * (2.0 * (1.0 + rho) * n * dbar - rho * (m + 0.5) * n);
    let eq3 = lhs3 - rhs3;

    let drive = (i * (alpha - alpha.conj()) * sqrt_n).re;
    let pair_term = (-i * 2.0 * d.beta * (dbar.conj() - dbar) * n * sign.sign()).re;
    let eq4 = p.kappa * n - (drive + pair_term);

    ResonantRaw {
        eq1,
        scale1: [
            p.alpha_mag * sqrt_n,
            0.5 * p.kappa * n,
            eps * pop.abs(),
            eps * rho * (n + 0.5) * dbar.norm(),
        ],
        eq2,
        scale2: [m * m, m, 4.0 * dbar.norm_sqr()],
        eq3,
        scale3: [
            p.gamma * dbar.norm(),
            2.0 * eps * (1.0 + rho) * n * dbar.norm(),
            eps * rho * (m + 0.5) * n,
        ],
        eq4,
        scale4: [p.kappa * n, drive.abs(), pair_term.abs()],
    }
}

/// Resonant steady state on the physical branch: the root continuously
/// connected to the undriven solution, i.e. the smallest photon number.
pub fn solve_resonant(
    p: &SystemParams,
    d: &DerivedParams,
    sign: ResonanceSign,
) -> Result<SteadyState> {
    solve_resonant_all(p, d, sign)?
        .into_iter()
        .next()
        .ok_or(Error::InfeasibleBranch)
}

/// Every resonant root with `n > 0`, sorted by increasing photon number.
///
/// Lines 2 and 3 of the resonant system are solved in closed form for `m` and
/// `d` at given `n`; the modulus of line 1 then leaves a scalar equation in
/// `ln n` that is scanned for sign changes and bisected. Each root is polished
/// by damped Newton on the full square system.
pub fn solve_resonant_all(
    p: &SystemParams,
    d: &DerivedParams,
    sign: ResonanceSign,
) -> Result<Vec<SteadyState>> {
    let branch = sign.branch();
    if p.alpha_mag == 0.0 {
        return Ok(vec![SteadyState::zero(branch)]);
    }
    let a2 = p.alpha_mag * p.alpha_mag;
    let line1 = |n: f64| {
        let (m, dbar) = pair_closure(p, d, n);
        let (r, _) = drive_balance(p, d, n, m, dbar, sign);
        r.norm_sqr().ln() - (a2 * n).ln()
    };

    // |line 1 rhs| >= κn/2 whenever Im D >= 0, so 4|α|²/κ² bounds n there;
    // widen until the far end is positive.
    let mut n_hi = 4.0 * a2 / (p.kappa * p.kappa);
    let mut widen = 0;
    while line1(n_hi) < 0.0 {
        n_hi *= 4.0;
        widen += 1;
        if widen > 60 {
            return Err(Error::NoConvergence {
                best_residual: f64::INFINITY,
            });
        }
    }
    let t_hi = n_hi.ln();
    let grid: Vec<f64> = (0..=800).map(|k| t_hi - 160.0 + 0.2 * k as f64).collect();
    let brackets = sign_changes(|t| line1(t.exp()), &grid);
    if brackets.is_empty() {
        return Err(Error::InfeasibleBranch);
    }

    let mut roots = Vec::with_capacity(brackets.len());
    let mut best = f64::INFINITY;
    for (lo, hi) in brackets {
        let n = bisect(|t| line1(t.exp()), lo, hi).exp();
        let (m, dbar) = pair_closure(p, d, n);
        let (r, _) = drive_balance(p, d, n, m, dbar, sign);
        // iα*√n = R  ⇒  α = i R* / √n
        let phase = (C64::i() * r.conj()).arg();
        let mut s = SteadyState {
            n_bar: n,
            m_bar: m,
            d_bar: dbar,
            alpha_phase: phase,
            branch,
            residual: 0.0,
            photon_balance_residual: 0.0,
        };
        s = polish_resonant(p, d, s, sign);
        let res = resonant_residuals(p, d, &s, sign);
        s.residual = res[0].max(res[1]).max(res[2]);
        s.photon_balance_residual = res[3];
        best = best.min(s.residual);
        if s.n_bar > 0.0 && s.m_bar >= 0.0 {
            roots.push(s);
        }
    }
    if roots.is_empty() {
        return Err(if best.is_finite() {
            Error::InfeasibleBranch
        } else {
            Error::NoConvergence { best_residual: best }
        });
    }
    roots.sort_by(|a, b| a.n_bar.total_cmp(&b.n_bar));
    Ok(roots)
}

/// `m` and `d` from lines 2 and 3 at fixed `n > 0`, on the `m >= 1` branch.
fn pair_closure(p: &SystemParams, d: &DerivedParams, n: f64) -> (f64, C64) {
    let rho = d.rho_eff();
    let eps = p.epsilon;
    let i = C64::i();
    let denom = C64::new(p.gamma, 2.0 * eps * (1.0 + rho) * n);
    let unit = i * eps * rho * n / denom; // d / (m + ½)
    let g = 4.0 * unit.norm_sqr();
    // (1-g) m² - (1+g) m - g/4 = 0, solved for v = m - 1 without cancellation
    let b = 1.0 - 3.0 * g;
    let disc = (b * b + 9.0 * g * (1.0 - g)).sqrt();
    let v = if b >= 0.0 {
        4.5 * g / (b + disc)
    } else {
        (disc - b) / (2.0 * (1.0 - g))
    };
    let m = 1.0 + v;
    (m, unit * (m + 0.5))
}

fn drive_balance(
    p: &SystemParams,
    d: &DerivedParams,
    n: f64,
    m: f64,
    dbar: C64,
    sign: ResonanceSign,
) -> (C64, f64) {
    let rho = d.rho_eff();
    let pair = match sign {
        ResonanceSign::Plus => dbar,
        ResonanceSign::Minus => dbar.conj(),
    };
    let r = 0.5 * p.kappa * n
        + C64::i() * p.epsilon * (0.5 * (1.0 + rho) * m * n - rho * (n + 0.5) * pair);
    (r, m)
}

fn polish_resonant(
    p: &SystemParams,
    d: &DerivedParams,
    s: SteadyState,
    sign: ResonanceSign,
) -> SteadyState {
    let square = |x: &[f64]| {
        let dbar = C64::new(x[2], x[3]);
        let r = resonant_raw(p, d, x[0], x[1], dbar, x[4], sign);
        let s1 = r.scale1.iter().fold(0.0f64, |a, v| a.max(*v)).max(f64::MIN_POSITIVE);
        let s2 = r.scale2.iter().fold(0.0f64, |a, v| a.max(*v)).max(f64::MIN_POSITIVE);
        let s3 = r.scale3.iter().fold(0.0f64, |a, v| a.max(*v)).max(f64::MIN_POSITIVE);
        vec![r.eq1.re / s1, r.eq1.im / s1, r.eq2 / s2, r.eq3.re / s3, r.eq3.im / s3]
    };
    let x0 = [s.n_bar, s.m_bar, s.d_bar.re, s.d_bar.im, s.alpha_phase];
    let before = square(&x0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if before < 1e-13 {
        return s;
    }
    let (x, after) = damped_newton(square, &x0, 30, 1e-14);
    if after < before && x[0] > 0.0 && x[1] >= 1.0 {
        SteadyState {
            n_bar: x[0],
            m_bar: x[1],
            d_bar: C64::new(x[2], x[3]),
            alpha_phase: x[4].rem_euclid(2.0 * PI),
            ..s
        }
    } else {
        s
    }
}

/// Solves each drive amplitude independently. Per-point failures are kept.
pub fn sweep_alpha(
    p: &SystemParams,
    d: &DerivedParams,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Vec<Result<SteadyState>> {
    alphas
        .iter()
        .map(|&a| {
            let pa = SystemParams { alpha_mag: a, ..*p };
            solve(&pa, d, opts)
        })
        .collect()
}

/// Indices `k` where `n` or `m` decreases from point `k-1` to `k` along a
/// sweep ordered by increasing drive; these mark solver branch jumps.
pub fn branch_jumps(states: &[Result<SteadyState>]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<&SteadyState> = None;
    for (k, s) in states.iter().enumerate() {
        if let Ok(s) = s {
            if let Some(q) = prev {
                let tol = 1e-12;
                if s.n_bar < q.n_bar * (1.0 - tol) || s.m_bar < q.m_bar * (1.0 - tol) {
                    out.push(k);
                }
            }
            prev = Some(s);
        }
    }
    out
}

/// First moments of the second-order basis in the double-frequency rotating
/// frames: `c(t) = C e^{-2iωt}`, `d(t) = D e^{-2iΩt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldMoments {
    pub c: C64,
    pub n: f64,
    pub d: C64,
    pub m: f64,
}

impl MeanFieldMoments {
    /// `(c, c*, n, d, d*, m)` in basis order.
    pub fn as_six(&self) -> [C64; 6] {
        [
            self.c,
            self.c.conj(),
            C64::new(self.n, 0.0),
            self.d,
            self.d.conj(),
            C64::new(self.m, 0.0),
        ]
    }

    fn pack(&self) -> [f64; 6] {
        [self.c.re, self.c.im, self.n, self.d.re, self.d.im, self.m]
    }

    fn unpack(y: &[f64; 6]) -> Self {
        MeanFieldMoments {
            c: C64::new(y[0], y[1]),
            n: y[2],
            d: C64::new(y[3], y[4]),
            m: y[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldOptions {
    pub t_end: f64,
    pub dt: f64,
    pub initial: MeanFieldMoments,
    /// Any moment above this magnitude aborts the run as divergent.
    pub ceiling: f64,
    /// Keep every k-th step in the returned trajectory.
    pub record_every: usize,
}

impl MeanFieldOptions {
    /// Step at the resolution bound and a run of `settle` slowest decay times.
    pub fn auto(p: &SystemParams, d: &DerivedParams, settle: f64) -> Self {
        MeanFieldOptions {
            t_end: settle / p.kappa.min(p.gamma),
            dt: max_step(d),
            initial: MeanFieldMoments {
                c: C64::new(0.0, 0.0),
                n: 1e-6,
                d: C64::new(0.0, 0.0),
                m: 0.0,
            },
            ceiling: 1e12,
            record_every: 16,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).ceil() as usize
    }
}

/// Largest step that still resolves the double-frequency oscillations.
pub fn max_step(d: &DerivedParams) -> f64 {
    0.05 / d.omega_eff.abs().max(d.omega_m_eff.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub moments: Vec<MeanFieldMoments>,
}

impl Trajectory {
    /// Time-averaged `(n, m)` over the final `fraction` of the run.
    pub fn tail_average(&self, fraction: f64) -> (f64, f64) {
        let len = self.moments.len();
        let start = ((1.0 - fraction.clamp(0.0, 1.0)) * len as f64).floor() as usize;
        let tail = &self.moments[start.min(len.saturating_sub(1))..];
        let k = tail.len().max(1) as f64;
        let n = tail.iter().map(|s| s.n).sum::<f64>() / k;
        let m = tail.iter().map(|s| s.m).sum::<f64>() / k;
        (n, m)
    }

    pub fn last(&self) -> Option<&MeanFieldMoments> {
        self.moments.last()
    }
}

/// Integrates the noiseless nonlinear Langevin equations for the six first
/// moments with all operator products factorized into products of means.
///
/// The drive enters through `a → √n e^{-iωt}`. Oscillating cross terms at
/// `2ω`, `2Ω` and their combinations are kept, so the step must resolve them.
/// The phonon number relaxes at Γ, the rate the damping generator assigns it.
pub fn integrate_mean_field(
    p: &SystemParams,
    d: &DerivedParams,
    opts: &MeanFieldOptions,
) -> Result<Trajectory> {
    let bound = max_step(d);
    if !(opts.dt > 0.0) || opts.dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            dt: opts.dt,
            max: bound,
        });
    }
    let rhs = mean_field_rhs(p, d);
    let steps = opts.steps();
    let every = opts.record_every.max(1);
    let mut times = Vec::with_capacity(steps / every + 2);
    let mut moments = Vec::with_capacity(steps / every + 2);
    let mut y = opts.initial.pack();
    times.push(0.0);
    moments.push(opts.initial);

    for k in 0..steps {
        let t = k as f64 * opts.dt;
        y = rk4_step(&rhs, t, &y, opts.dt);
        let worst = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !worst.is_finite() || worst > opts.ceiling {
            return Err(Error::Divergence {
                t: t + opts.dt,
                value: worst,
            });
        }
        if (k + 1) % every == 0 || k + 1 == steps {
            times.push((k + 1) as f64 * opts.dt);
            moments.push(MeanFieldMoments::unpack(&y));
        }
    }
    Ok(Trajectory { times, moments })
}

fn mean_field_rhs(p: &SystemParams, d: &DerivedParams) -> impl Fn(f64, &[f64; 6]) -> [f64; 6] {
    let kappa = p.kappa;
    let gamma = p.gamma;
    let eps = p.epsilon;
    let rho = d.rho_eff();
    let beta = d.beta;
    let w = d.omega_eff;
    let big_w = d.omega_m_eff;
    let alpha = p.alpha();
    let i = C64::i();

    move |t: f64, y: &[f64; 6]| {
        let s = MeanFieldMoments::unpack(y);
        // e^{-2iωt}, e^{-2iΩt}
        let rot_c = C64::from_polar(1.0, -2.0 * w * t);
        let rot_d = C64::from_polar(1.0, -2.0 * big_w * t);
        let c_lab = s.c * rot_c;
        let d_lab = s.d * rot_d;
        let xc = 2.0 * c_lab.re; // c + c*
        let xd = 2.0 * d_lab.re; // d + d*
        let sqrt_n = s.n.max(0.0).sqrt();

        let dc = -kappa * s.c
            - i * eps
                * (2.0 * (s.m + xd) * s.c
                    - rho * (xd - s.m) * (2.0 * s.c + (s.n + 0.5) * rot_c.conj()))
            + i * alpha.conj() * sqrt_n;

        let dn = 4.0 * beta * c_lab.im * (xd - s.m) - kappa * s.n
            + (i * (alpha - alpha.conj()) * sqrt_n).re;

        let dd = -gamma * s.d
            - i * eps
                * (s.n * (2.0 * s.d + (s.m + 0.5) * rot_d.conj())
                    - rho * (xc + s.n) * ((s.m + 0.5) * rot_d.conj() - 2.0 * s.d));

        let dm = 4.0 * eps * d_lab.im * ((rho - 1.0) * s.n + rho * xc) - gamma * s.m;

        [dc.re, dc.im, dn, dd.re, dd.im, dm]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_params;

    fn half_ratio(alpha: f64) -> (SystemParams, DerivedParams) {
        let mut p = SystemParams::reference_weak();
        p.omega_bare = 2.0 * p.omega_m_bare;
        p.alpha_mag = alpha;
        let d = derive_params(&p).unwrap();
        (p, d)
    }

    #[test]
    fn undriven_off_resonant_is_zero() {
        let (p, d) = half_ratio(0.0);
        let s = solve_off_resonant(&p, &d).unwrap();
        assert_eq!((s.n_bar, s.m_bar), (0.0, 0.0));
    }

    #[test]
    fn off_resonant_reference_value() {
        let (p, d) = half_ratio(1000.0);
        assert!((d.rho - 0.442_48).abs() < 1e-5);
        let s = solve_off_resonant(&p, &d).unwrap();
        assert!((s.m_bar - 26.7566).abs() < 1e-3, "m = {}", s.m_bar);
        assert!((s.n_bar - 0.680_17).abs() < 1e-4, "n = {}", s.n_bar);
        assert!(s.residual < 1e-12);
        assert_eq!(s.d_bar, C64::new(0.0, 0.0));
    }

    #[test]
    fn off_resonant_drive_scaling() {
        let (p, d) = half_ratio(1e5);
        let s1 = solve_off_resonant(&p, &d).unwrap();
        let s10 = solve_off_resonant(&SystemParams { alpha_mag: 1e6, ..p }, &d).unwrap();
        let ratio = s10.m_bar / s1.m_bar;
        assert!((ratio - 10.0).abs() < 0.05, "ratio = {ratio}");
    }

    #[test]
    fn weak_drive_keeps_precision() {
        let (p, d) = half_ratio(1e-3);
        let s = solve_off_resonant(&p, &d).unwrap();
        assert!(s.m_bar >= 1.0);
        assert!(s.residual < 1e-12, "residual {}", s.residual);
    }

    #[test]
    fn degenerate_coupling_rejected() {
        let (mut p, _) = half_ratio(10.0);
        p.epsilon = 0.0;
        let d = derive_params(&p).unwrap();
        assert_eq!(solve_off_resonant(&p, &d), Err(Error::DegenerateCoupling));
    }

    #[test]
    fn resonant_undriven_is_zero() {
        let p = SystemParams::reference_weak().tuned_to_resonance();
        let d = derive_params(&p).unwrap();
        let s = solve_resonant(&p, &d, ResonanceSign::Plus).unwrap();
        assert_eq!((s.n_bar, s.m_bar, s.d_bar.norm()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn resonant_saturates_near_one() {
        let p = SystemParams {
            alpha_mag: 200.0,
            ..SystemParams::reference_weak().tuned_to_resonance()
        };
        let d = derive_params(&p).unwrap();
        assert_eq!(classify_branch(&d, 1e-6), Branch::Resonant);
        let s = solve_resonant(&p, &d, ResonanceSign::Plus).unwrap();
        assert!(s.m_bar > 0.5 && s.m_bar < 2.0, "m = {}", s.m_bar);
        assert!(s.residual < 1e-9, "residual {}", s.residual);
        let gap = s.m_bar * s.m_bar - s.m_bar - 4.0 * s.d_bar.norm_sqr();
        assert!(gap.abs() <= 4.0 * f64::EPSILON * s.m_bar * s.m_bar);
    }

    #[test]
    fn resonant_without_momentum_term_has_no_pair() {
        let p = SystemParams {
            alpha_mag: 500.0,
            include_nonstandard: false,
            ..SystemParams::reference_weak().tuned_to_resonance()
        };
        let d = derive_params(&p).unwrap();
        let s = solve_resonant(&p, &d, ResonanceSign::Plus).unwrap();
        assert_eq!(s.d_bar.norm(), 0.0);
        assert_eq!(s.m_bar, 1.0);
        // Line 1 alone: |α|² = n(κ² + ε²)/4.
        let n = 4.0 * 500.0f64.powi(2) / (p.kappa.powi(2) + p.epsilon.powi(2));
        assert!((s.n_bar - n).abs() < 1e-12 * n);
    }

    #[test]
    fn anti_resonant_solver_runs() {
        let p = SystemParams {
            alpha_mag: 300.0,
            ..SystemParams::reference_weak()
        };
        let d = derive_params(&p).unwrap();
        let s = solve_resonant(&p, &d, ResonanceSign::Minus).unwrap();
        assert_eq!(s.branch, Branch::AntiResonant);
        assert!(s.residual < 1e-9);
    }

    #[test]
    fn forced_branch_and_tolerance() {
        let p = SystemParams {
            alpha_mag: 100.0,
            ..SystemParams::reference_weak()
        };
        let d = derive_params(&p).unwrap();
        // ε/2 effective detuning is outside the default matching window.
        assert_eq!(classify_branch(&d, 1e-6), Branch::OffResonant);
        assert_eq!(classify_branch(&d, 1e-5), Branch::Resonant);
        let opts = SolverOptions {
            branch: Some(Branch::Resonant),
            ..SolverOptions::default()
        };
        assert_eq!(solve(&p, &d, &opts).unwrap().branch, Branch::Resonant);
    }

    #[test]
    fn sweep_is_monotone() {
        let (p, d) = half_ratio(0.0);
        let alphas: Vec<f64> = (0..40).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let sweep = sweep_alpha(&p, &d, &alphas, &SolverOptions::default());
        assert!(sweep.iter().all(|s| s.is_ok()));
        assert!(branch_jumps(&sweep).is_empty());
    }

    #[test]
    fn step_bound_enforced() {
        let (p, d) = half_ratio(10.0);
        let mut o = MeanFieldOptions::auto(&p, &d, 1.0);
        o.dt *= 2.0;
        assert!(matches!(
            integrate_mean_field(&p, &d, &o),
            Err(Error::StepSize { .. })
        ));
    }

    fn fast_params() -> SystemParams {
        SystemParams {
            omega_bare: 2.0 * PI * 1000.0,
            omega_m_bare: 2.0 * PI * 560.0,
            kappa: 2.0 * PI * 40.0,
            gamma: 2.0 * PI * 20.0,
            epsilon: 2.0 * PI * 5.0,
            alpha_mag: 0.0,
            alpha_phase: 0.0,
            temperature: 0.0,
            include_nonstandard: true,
        }
    }

    #[test]
    fn undriven_moments_decay() {
        let p = fast_params();
        let d = derive_params(&p).unwrap();
        let mut o = MeanFieldOptions::auto(&p, &d, 8.0);
        o.initial = MeanFieldMoments {
            c: C64::new(0.1, 0.0),
            n: 0.5,
            d: C64::new(0.0, 0.1),
            m: 2.0,
        };
        let traj = integrate_mean_field(&p, &d, &o).unwrap();
        let last = traj.last().unwrap();
        assert!(last.n.abs() < 1e-3 * 0.5, "n = {}", last.n);
        assert!(last.m.abs() < 1e-3 * 2.0, "m = {}", last.m);
    }

    #[test]
    fn uncoupled_phonons_decay_exponentially() {
        let mut p = fast_params();
        p.epsilon = 0.0;
        p.alpha_mag = 50.0;
        let d = derive_params(&p).unwrap();
        let mut o = MeanFieldOptions::auto(&p, &d, 2.0);
        o.initial.m = 3.0;
        let traj = integrate_mean_field(&p, &d, &o).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.moments).step_by(50) {
            let expected = 3.0 * (-p.gamma * t).exp();
            assert!((s.m - expected).abs() < 1e-9, "t = {t}: {} vs {expected}", s.m);
        }
    }
}
