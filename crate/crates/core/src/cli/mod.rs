//! Command drivers behind the `quadom` binary.
//!
//! Each command reads a [`RunConfig`], writes one or more tables into the
//! output directory and returns an [`Outcome`] carrying the process exit code.

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{Format, Ratio, RunConfig};
use output::{Cell, Table};

use crate::dynamics::{build_drift, stability, stability_map, StabilityState};
use crate::error::{Error, Result};
use crate::fock_oracle::{verify_closure, verify_hamiltonian};
use crate::model::{derive_params, thermal_occupancy, SystemParams};
use crate::spectra::{
    analyze, default_grid, evaluate_s_aa, output_spectrum, relative_l2, PeakOptions,
};
use crate::steady_state::{integrate_mean_field, solve, MeanFieldOptions, SteadyState};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_UNSTABLE: u8 = 4;
pub const EXIT_VERIFY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Steady,
    Spectrum,
    Stability,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: u8,
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub notes: Vec<String>,
}

/// Exit code for an error that aborted a whole command.
pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParam { .. } | Error::Io(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_UNSTABLE,
        _ => EXIT_SOLVER,
    }
}

/// Runs `cmd` on a pool of `jobs` workers (rayon's default when `None`).
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| match cmd {
        Command::Steady => cmd_steady(cfg, out),
        Command::Spectrum => cmd_spectrum(cfg, out),
        Command::Stability => cmd_stability(cfg, out),
        Command::Verify => cmd_verify(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
    })
}

fn status(e: &Error) -> Cell {
    Cell::S(format!("error: {e}"))
}

fn solve_at(p: &SystemParams, cfg: &RunConfig) -> Result<SteadyState> {
    let d = derive_params(p)?;
    solve(p, &d, &cfg.solver_options())
}

/// Drive sweep at the configured frequencies.
pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let base = cfg.system_params();
    base.validate()?;
    let ratio = base.omega_m_bare / base.omega_bare;
    let alphas = cfg.alpha_grid();
    let results: Vec<Result<SteadyState>> = alphas
        .par_iter()
        .map(|&a| solve_at(&SystemParams { alpha_mag: a, ..base }, cfg))
        .collect();

    let mut t = Table::new(&[
        "index",
        "alpha",
        "ratio",
        "n_bar",
        "m_bar",
        "d_abs",
        "branch",
        "alpha_phase",
        "residual",
        "photon_balance_residual",
        "status",
    ]);
    let mut failed = 0;
    for (k, (a, r)) in alphas.iter().zip(&results).enumerate() {
        match r {
            Ok(s) => t.push(vec![
                k.into(),
                (*a).into(),
                ratio.into(),
                s.n_bar.into(),
                s.m_bar.into(),
                s.d_bar.norm().into(),
                s.branch.as_str().into(),
                s.alpha_phase.into(),
                s.residual.into(),
                s.photon_balance_residual.into(),
                "ok".into(),
            ]),
            Err(e) => {
                failed += 1;
                let nan = Cell::F(f64::NAN);
                t.push(vec![
                    k.into(),
                    (*a).into(),
                    ratio.into(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    "".into(),
                    nan.clone(),
                    nan.clone(),
                    nan,
                    status(e),
                ]);
            }
        }
    }
    let path = t.write(out, "steady", cfg)?;
    Ok(Outcome {
        exit_code: if failed > 0 { EXIT_SOLVER } else { EXIT_OK },
        files: vec![path],
        notes: vec![format!("{} points, {failed} solver failures", alphas.len())],
    })
}

/// Drive sweep for every configured frequency ratio, with the stability
/// margin of each solved point.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let alphas = cfg.alpha_grid();
    let mut tasks = Vec::new();
    for (ri, &r) in cfg.ratio_values.iter().enumerate() {
        let p = cfg.params_at_ratio(r);
        p.validate()?;
        for (ai, &a) in alphas.iter().enumerate() {
            tasks.push((ri, ai, r, SystemParams { alpha_mag: a, ..p }));
        }
    }
    let results: Vec<_> = tasks
        .par_iter()
        .map(|(_, _, _, p)| {
            let d = derive_params(p)?;
            let s = solve(p, &d, &cfg.solver_options())?;
            let rep = stability(&build_drift(p, &d, &s))?;
            Ok((s, rep))
        })
        .collect::<Vec<Result<_>>>();

    let mut t = Table::new(&[
        "ratio_index",
        "alpha_index",
        "ratio",
        "alpha",
        "n_bar",
        "m_bar",
        "d_abs",
        "branch",
        "residual",
        "margin",
        "stability",
        "status",
    ]);
    let (mut failed, mut unstable) = (0, 0);
    for ((ri, ai, r, p), res) in tasks.iter().zip(&results) {
        let head: Vec<Cell> = vec![(*ri).into(), (*ai).into(), r.to_string().into(), p.alpha_mag.into()];
        let tail = match res {
            Ok((s, rep)) => {
                if rep.state != StabilityState::Stable {
                    unstable += 1;
                }
                vec![
                    s.n_bar.into(),
                    s.m_bar.into(),
                    s.d_bar.norm().into(),
                    s.branch.as_str().into(),
                    s.residual.into(),
                    rep.margin.into(),
                    state_name(rep.state).into(),
                    "ok".into(),
                ]
            }
            Err(e) => {
                failed += 1;
                let nan = Cell::F(f64::NAN);
                vec![nan.clone(), nan.clone(), nan.clone(), "".into(), nan.clone(), nan, "".into(), status(e)]
            }
        };
        t.push(head.into_iter().chain(tail).collect());
    }
    let path = t.write(out, "sweep", cfg)?;
    let exit_code = if failed > 0 {
        EXIT_SOLVER
    } else if unstable > 0 {
        EXIT_UNSTABLE
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        exit_code,
        files: vec![path],
        notes: vec![format!(
            "{} points, {failed} solver failures, {unstable} not stable",
            tasks.len()
        )],
    })
}

fn state_name(s: StabilityState) -> &'static str {
    match s {
        StabilityState::Stable => "stable",
        StabilityState::Marginal => "marginal",
        StabilityState::Unstable => "unstable",
    }
}

/// Stability map over imposed populations.
pub fn cmd_stability(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let p = cfg.system_params();
    let d = derive_params(&p)?;
    let (ng, mg) = cfg.map_grids();
    let map = stability_map(&p, &d, &ng, &mg);

    let mut t = Table::new(&["n_index", "m_index", "n_bar", "m_bar", "margin", "stability", "status"]);
    let (mut failed, mut unstable, mut stable) = (0, 0, 0);
    let mut first_unstable: Option<(f64, f64, f64)> = None;
    for (i, row) in map.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Ok(rep) => {
                    if rep.state == StabilityState::Stable {
                        stable += 1;
                    } else {
                        unstable += 1;
                        if first_unstable.is_none() {
                            first_unstable = Some((ng[i], mg[j], rep.margin));
                        }
                    }
                    t.push(vec![
                        i.into(),
                        j.into(),
                        ng[i].into(),
                        mg[j].into(),
                        rep.margin.into(),
                        state_name(rep.state).into(),
                        "ok".into(),
                    ]);
                }
                Err(e) => {
                    failed += 1;
                    t.push(vec![
                        i.into(),
                        j.into(),
                        ng[i].into(),
                        mg[j].into(),
                        Cell::F(f64::NAN),
                        "".into(),
                        status(e),
                    ]);
                }
            }
        }
    }
    let path = t.write(out, "stability", cfg)?;
    let total = ng.len() * mg.len();
    let mut notes = vec![format!("{stable}/{total} cells stable, {failed} eigensolver failures")];
    if let Some((n, m, margin)) = first_unstable {
        notes.push(format!("first unstable cell n = {n:e}, m = {m:e}, margin = {margin:e} rad/s"));
    }
    let exit_code = if failed > 0 {
        EXIT_SOLVER
    } else if unstable > 0 {
        EXIT_UNSTABLE
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        exit_code,
        files: vec![path],
        notes,
    })
}

struct ModeRun {
    label: &'static str,
    params: SystemParams,
    ds: crate::dynamics::DriftSystem,
    omega_eff: f64,
}

/// Paired spectra with and without the momentum-field coupling.
pub fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut runs = Vec::new();
    let mut stab = Table::new(&["mode", "n_bar", "m_bar", "margin", "stability"]);
    let mut unstable = false;
    for (label, on) in [("beta_on", true), ("beta_off", false)] {
        let p = SystemParams {
            include_nonstandard: on,
            ..cfg.system_params()
        };
        let d = derive_params(&p)?;
        let s = solve(&p, &d, &cfg.solver_options())?;
        let ds = build_drift(&p, &d, &s);
        let rep = stability(&ds)?;
        if rep.state != StabilityState::Stable {
            unstable = true;
        }
        stab.push(vec![
            label.into(),
            s.n_bar.into(),
            s.m_bar.into(),
            rep.margin.into(),
            state_name(rep.state).into(),
        ]);
        runs.push(ModeRun {
            label,
            params: p,
            ds,
            omega_eff: d.omega_eff.max(d.omega_m_eff),
        });
    }
    if unstable {
        let path = stab.write(out, "spectrum_stability", cfg)?;
        return Ok(Outcome {
            exit_code: EXIT_UNSTABLE,
            files: vec![path],
            notes: vec!["steady state is not stable; spectrum not computed".into()],
        });
    }

    let (w_min, w_max) = if cfg.spectrum_w_min_hz == 0.0 && cfg.spectrum_w_max_hz == 0.0 {
        let top = runs.iter().fold(0.0f64, |a, r| a.max(r.omega_eff));
        (0.0, 4.0 * top)
    } else {
        (2.0 * PI * cfg.spectrum_w_min_hz, 2.0 * PI * cfg.spectrum_w_max_hz)
    };
    let grid = default_grid(&[&runs[0].ds, &runs[1].ds], w_min, w_max, cfg.spectrum_points);
    let flags = cfg.mode_flags();
    let peak_opts = PeakOptions {
        baseline: 1.0,
        prominence: cfg.peak_prominence,
        ..PeakOptions::default()
    };

    let mut files = Vec::new();
    let mut spectra = Vec::new();
    let mut peaks = Table::new(&["mode", "index", "center_hz", "amplitude", "spread_hz", "residual"]);
    let mut notes = Vec::new();
    for r in &runs {
        let d = derive_params(&r.params)?;
        let n_th = thermal_occupancy(d.omega_m_eff, r.params.temperature);
        let mut spec = output_spectrum(&r.ds, &grid, flags, n_th);
        let fit = analyze(&mut spec, &peak_opts);
        let mut t = Table::new(&["w_half_hz", "s_cc", "s_aa"]);
        for (&w, &v) in grid.iter().zip(&spec.s_cc) {
            t.push(vec![
                (w / (4.0 * PI)).into(),
                v.into(),
                evaluate_s_aa(&spec.peaks, 0.5 * w).into(),
            ]);
        }
        files.push(t.write(out, &format!("spectrum_{}", r.label), cfg)?);
        for (k, g) in spec.peaks.iter().enumerate() {
            peaks.push(vec![
                r.label.into(),
                k.into(),
                (g.omega / (2.0 * PI)).into(),
                g.s.into(),
                (g.delta / (2.0 * PI)).into(),
                g.residual.into(),
            ]);
        }
        notes.push(format!(
            "{}: {} points, {} singular, {} peaks, overlap = {}, unresolved = {}",
            r.label,
            grid.len(),
            spec.singular_points,
            spec.peaks.len(),
            fit.overlap,
            fit.unresolved
        ));
        spectra.push(spec);
    }
    files.push(peaks.write(out, "spectrum_peaks", cfg)?);

    let kappa = runs[0].params.kappa;
    let centre = 2.0 * derive_params(&runs[0].params)?.omega_eff;
    let mut diff = Table::new(&["metric", "value"]);
    let full = relative_l2(&grid, &spectra[0].s_cc, &spectra[1].s_cc, w_min, w_max);
    let near = relative_l2(
        &grid,
        &spectra[0].s_cc,
        &spectra[1].s_cc,
        centre - 20.0 * kappa,
        centre + 20.0 * kappa,
    );
    diff.push(vec!["relative_l2_full".into(), full.into()]);
    diff.push(vec!["relative_l2_near_2omega".into(), near.into()]);
    for (r, spec) in runs.iter().zip(&spectra) {
        if let Some(top) = spec.peaks.iter().max_by(|a, b| a.s.total_cmp(&b.s)) {
            diff.push(vec![
                format!("dominant_peak_hz_{}", r.label).into(),
                (top.omega / (2.0 * PI)).into(),
            ]);
        }
    }
    files.push(diff.write(out, "spectrum_diff", cfg)?);
    files.push(stab.write(out, "spectrum_stability", cfg)?);
    notes.push(format!("relative L2 difference near 2ω: {near:e}"));
    Ok(Outcome {
        exit_code: EXIT_OK,
        files,
        notes,
    })
}

/// Operator-algebra, Hamiltonian and solver-vs-integration checks.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut t = Table::new(&["check", "value", "tolerance", "status"]);
    let mut failures = 0;
    let row = |t: &mut Table, name: String, value: f64, tol: f64, state: &str| {
        t.push(vec![name.into(), value.into(), tol.into(), state.into()]);
    };
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };

    match verify_closure(cfg.fock_cutoff) {
        Ok(rep) => {
            for c in &rep.checks {
                let ok = c.interior < 1e-12;
                failures += usize::from(!ok);
                row(&mut t, format!("closure {} interior", c.name), c.interior, 1e-12, verdict(ok));
            }
            let ok = rep.cross_sector == 0.0;
            failures += usize::from(!ok);
            row(&mut t, "closure cross-sector".into(), rep.cross_sector, 0.0, verdict(ok));
            row(&mut t, "closure full-matrix max".into(), rep.max_full(), f64::NAN, "info");
        }
        Err(e) => {
            failures += 1;
            row(&mut t, format!("closure: {e}"), f64::NAN, 1e-12, "fail");
        }
    }

    let p = cfg.system_params();
    let d = derive_params(&p)?;
    match verify_hamiltonian(&p, &d, cfg.hamiltonian_cutoff, cfg.fock_dim_cap) {
        Ok(rep) => {
            for (name, v, tol) in [
                ("hamiltonian hermiticity quadrature form", rep.hermiticity_quadrature, 1e-12),
                ("hamiltonian hermiticity pair form", rep.hermiticity_pair, 1e-12),
                ("hamiltonian forms interior", rep.interior_deviation, 1e-10),
            ] {
                let ok = v < tol;
                failures += usize::from(!ok);
                row(&mut t, name.into(), v, tol, verdict(ok));
            }
        }
        Err(e) => {
            failures += 1;
            row(&mut t, format!("hamiltonian: {e}"), f64::NAN, 1e-10, "fail");
        }
    }

    let mut notes = Vec::new();
    match solve(&p, &d, &cfg.solver_options()) {
        Ok(s) => {
            let opts = MeanFieldOptions::auto(&p, &d, cfg.ode_settle);
            if opts.steps() > cfg.ode_max_steps {
                notes.push(format!(
                    "mean-field check skipped: {} steps exceed ode_max_steps = {}",
                    opts.steps(),
                    cfg.ode_max_steps
                ));
                row(&mut t, "mean-field n_bar".into(), f64::NAN, cfg.ode_tolerance, "skipped");
                row(&mut t, "mean-field m_bar".into(), f64::NAN, cfg.ode_tolerance, "skipped");
            } else {
                match integrate_mean_field(&p, &d, &opts) {
                    Ok(traj) => {
                        let (n, m) = traj.tail_average(0.1);
                        for (name, got, want) in [("mean-field n_bar", n, s.n_bar), ("mean-field m_bar", m, s.m_bar)] {
                            let err = rel_err(got, want);
                            let ok = err < cfg.ode_tolerance;
                            failures += usize::from(!ok);
                            row(&mut t, name.into(), err, cfg.ode_tolerance, verdict(ok));
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        row(&mut t, format!("mean-field: {e}"), f64::NAN, cfg.ode_tolerance, "fail");
                    }
                }
            }
        }
        Err(e) => {
            failures += 1;
            row(&mut t, format!("steady state: {e}"), f64::NAN, cfg.solver_tol, "fail");
        }
    }

    let path = t.write(out, "verify", cfg)?;
    notes.push(format!("{failures} failed checks"));
    Ok(Outcome {
        exit_code: if failures > 0 { EXIT_VERIFY } else { EXIT_OK },
        files: vec![path],
        notes,
    })
}

/// Relative error, falling back to absolute when the reference is zero.
pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
