//! Flat `key = value` run configuration.
//!
//! Frequencies are ordinary frequencies in Hz and are converted to angular
//! units on load. Drive flux is in 1/s, temperature in K. Anything after `#`
//! on a line is a comment. Unknown and repeated keys are rejected.
//!
//! The linear coupling `g0` is not configurable: the model assumes a geometry
//! in which it vanishes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::spectra::ModeFlags;
use crate::steady_state::{Branch, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// One entry of a frequency-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Ratio {
    /// `Ω̃ = r ω̃` with ω̃ from the config.
    Value(f64),
    /// Optical frequency retuned so the effective frequencies coincide.
    Resonant,
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Value(r) => write!(f, "{r}"),
            Ratio::Resonant => write!(f, "resonant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub optical_freq_hz: f64,
    pub mechanical_freq_hz: f64,
    pub kappa_hz: f64,
    pub gamma_hz: f64,
    pub epsilon_hz: f64,
    pub alpha: f64,
    pub alpha_phase: f64,
    pub temperature: f64,

    pub include_nonstandard: bool,
    pub eq19_literal: bool,
    pub thermal_input: bool,
    /// `None` classifies from the effective frequencies.
    pub branch: Option<Branch>,
    /// Retune the optical frequency onto exact resonance before solving.
    pub tune_resonant: bool,
    pub resonance_tol: f64,
    pub solver_tol: f64,

    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub alpha_zero: bool,
    pub ratio_values: Vec<Ratio>,

    /// 0 for both bounds selects `[0, 4 max(ω, Ω)]`.
    pub spectrum_w_min_hz: f64,
    pub spectrum_w_max_hz: f64,
    pub spectrum_points: usize,
    pub peak_prominence: f64,

    pub map_n_min: f64,
    pub map_n_max: f64,
    pub map_n_points: usize,
    pub map_m_min: f64,
    pub map_m_max: f64,
    pub map_m_points: usize,
    pub map_log: bool,

    pub fock_cutoff: usize,
    pub hamiltonian_cutoff: usize,
    pub fock_dim_cap: usize,
    /// Integration length in units of the slowest decay time.
    pub ode_settle: f64,
    pub ode_max_steps: usize,
    pub ode_tolerance: f64,

    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            optical_freq_hz: 720e3,
            mechanical_freq_hz: 720e3,
            kappa_hz: 5.5e3,
            gamma_hz: 2.4,
            epsilon_hz: 5.0,
            alpha: 1e3,
            alpha_phase: 0.0,
            temperature: 0.04,
            include_nonstandard: true,
            eq19_literal: false,
            thermal_input: false,
            branch: None,
            tune_resonant: false,
            resonance_tol: 1e-6,
            solver_tol: 1e-9,
            alpha_min: 1.0,
            alpha_max: 1e4,
            alpha_points: 41,
            alpha_zero: true,
            ratio_values: vec![
                Ratio::Resonant,
                Ratio::Value(1.0),
                Ratio::Value(1.78),
                Ratio::Value(0.56),
            ],
            spectrum_w_min_hz: 0.0,
            spectrum_w_max_hz: 0.0,
            spectrum_points: 1 << 14,
            peak_prominence: 1e-3,
            map_n_min: 1e-4,
            map_n_max: 1.0,
            map_n_points: 25,
            map_m_min: 1.0,
            map_m_max: 1e3,
            map_m_points: 25,
            map_log: true,
            fock_cutoff: 30,
            hamiltonian_cutoff: 12,
            fock_dim_cap: 4096,
            ode_settle: 10.0,
            ode_max_steps: 2_000_000,
            ode_tolerance: 0.01,
            format: Format::Csv,
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_ratios(v: &str) -> std::result::Result<Vec<Ratio>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s == "resonant" {
                Ok(Ratio::Resonant)
            } else {
                parse_num::<f64>(s).map(Ratio::Value)
            }
        })
        .collect()
}

macro_rules! config_keys {
    ($($key:ident : $kind:ident),* $(,)?) => {
        const KEYS: &[&str] = &[$(stringify!($key)),*];

        fn assign(cfg: &mut RunConfig, key: &str, v: &str) -> std::result::Result<(), String> {
            match key {
                $(stringify!($key) => { cfg.$key = config_keys!(@parse $kind, v)?; })*
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        }

        fn render_values(cfg: &RunConfig) -> Vec<(&'static str, String)> {
            vec![$((stringify!($key), config_keys!(@show $kind, &cfg.$key))),*]
        }
    };
    (@parse f64, $v:expr) => { parse_num::<f64>($v) };
    (@parse usize, $v:expr) => { parse_num::<usize>($v) };
    (@parse bool, $v:expr) => { parse_bool($v) };
    (@parse ratios, $v:expr) => { parse_ratios($v) };
    (@parse branch, $v:expr) => {
        if $v == "auto" { Ok(None) } else { Branch::from_str($v).map(Some) }
    };
    (@parse format, $v:expr) => {
        match $v {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    };
    (@show f64, $x:expr) => { format!("{}", $x) };
    (@show usize, $x:expr) => { format!("{}", $x) };
    (@show bool, $x:expr) => { format!("{}", $x) };
    (@show ratios, $x:expr) => {
        $x.iter().map(|r: &Ratio| r.to_string()).collect::<Vec<_>>().join(", ")
    };
    (@show branch, $x:expr) => {
        match $x { None => "auto".to_string(), Some(b) => b.as_str().to_string() }
    };
    (@show format, $x:expr) => {
        match $x { Format::Csv => "csv".to_string(), Format::Json => "json".to_string() }
    };
}

config_keys! {
    optical_freq_hz: f64,
    mechanical_freq_hz: f64,
    kappa_hz: f64,
    gamma_hz: f64,
    epsilon_hz: f64,
    alpha: f64,
    alpha_phase: f64,
    temperature: f64,
    include_nonstandard: bool,
    eq19_literal: bool,
    thermal_input: bool,
    branch: branch,
    tune_resonant: bool,
    resonance_tol: f64,
    solver_tol: f64,
    alpha_min: f64,
    alpha_max: f64,
    alpha_points: usize,
    alpha_zero: bool,
    ratio_values: ratios,
    spectrum_w_min_hz: f64,
    spectrum_w_max_hz: f64,
    spectrum_points: usize,
    peak_prominence: f64,
    map_n_min: f64,
    map_n_max: f64,
    map_n_points: usize,
    map_m_min: f64,
    map_m_max: f64,
    map_m_points: usize,
    map_log: bool,
    fock_cutoff: usize,
    hamiltonian_cutoff: usize,
    fock_dim_cap: usize,
    ode_settle: f64,
    ode_max_steps: usize,
    ode_tolerance: f64,
    format: format,
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config {
                    line,
                    msg: format!("expected `key = value`, got `{body}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            assign(&mut cfg, key, value).map_err(|msg| Error::Config { line, msg })?;
        }
        cfg.check().map_err(|msg| Error::Config { line: 0, msg })?;
        Ok(cfg)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.alpha_min > 0.0 && self.alpha_max >= self.alpha_min) {
            return Err("need 0 < alpha_min <= alpha_max".into());
        }
        if self.alpha_points == 0 || self.spectrum_points < 2 {
            return Err("alpha_points and spectrum_points must be positive".into());
        }
        if self.ratio_values.is_empty() {
            return Err("ratio_values must not be empty".into());
        }
        if self.ratio_values.iter().any(|r| matches!(r, Ratio::Value(v) if !(*v > 0.0))) {
            return Err("ratio_values must be positive".into());
        }
        if self.map_n_points == 0 || self.map_m_points == 0 {
            return Err("map grids need at least one point".into());
        }
        if self.map_log && (self.map_n_min <= 0.0 || self.map_m_min <= 0.0) {
            return Err("log map grids need positive bounds".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields the same config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in render_values(self) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`RunConfig::render`], hex encoded.
    pub fn content_hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.render().as_bytes()))
    }

    /// Physical parameters in angular units.
    pub fn system_params(&self) -> SystemParams {
        let p = SystemParams {
            omega_bare: 2.0 * PI * self.optical_freq_hz,
            omega_m_bare: 2.0 * PI * self.mechanical_freq_hz,
            kappa: 2.0 * PI * self.kappa_hz,
            gamma: 2.0 * PI * self.gamma_hz,
            epsilon: 2.0 * PI * self.epsilon_hz,
            alpha_mag: self.alpha,
            alpha_phase: self.alpha_phase,
            temperature: self.temperature,
            include_nonstandard: self.include_nonstandard,
        };
        if self.tune_resonant {
            p.tuned_to_resonance()
        } else {
            p
        }
    }

    /// Parameters for one entry of `ratio_values`.
    pub fn params_at_ratio(&self, r: Ratio) -> SystemParams {
        let mut p = self.system_params();
        match r {
            Ratio::Value(v) => p.omega_m_bare = v * p.omega_bare,
            Ratio::Resonant => {
                p.omega_bare = 2.0 * PI * self.optical_freq_hz;
                p = p.tuned_to_resonance();
            }
        }
        p
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            resonance_tol: self.resonance_tol,
            branch: self.branch,
        }
    }

    pub fn mode_flags(&self) -> ModeFlags {
        ModeFlags {
            eq19_literal: self.eq19_literal,
            thermal_input: self.thermal_input,
        }
    }

    /// Log-spaced drive sweep, with a leading zero when `alpha_zero` is set.
    pub fn alpha_grid(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.alpha_points + 1);
        if self.alpha_zero {
            out.push(0.0);
        }
        out.extend(log_grid(self.alpha_min, self.alpha_max, self.alpha_points));
        out
    }

    pub fn map_grids(&self) -> (Vec<f64>, Vec<f64>) {
        let g = |lo, hi, n| {
            if self.map_log {
                log_grid(lo, hi, n)
            } else {
                lin_grid(lo, hi, n)
            }
        };
        (
            g(self.map_n_min, self.map_n_max, self.map_n_points),
            g(self.map_m_min, self.map_m_max, self.map_m_points),
        )
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}
