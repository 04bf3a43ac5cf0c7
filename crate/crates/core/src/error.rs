use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("no physical root with m >= 1 (residual landscape: f(lo) = {f_lo:e}, f(hi) = {f_hi:e})")]
    NoPhysicalRoot { f_lo: f64, f_hi: f64 },

    #[error("degenerate coupling: epsilon = 0 with nonzero drive")]
    DegenerateCoupling,

    #[error("solver did not converge (best residual {best_residual:e})")]
    NoConvergence { best_residual: f64 },

    #[error("only negative-population roots exist on this branch")]
    InfeasibleBranch,

    #[error("step size {dt:e} s exceeds resolution bound {max:e} s")]
    StepSize { dt: f64, max: f64 },

    #[error("mean-field trajectory diverged at t = {t:e} s (|value| = {value:e})")]
    Divergence { t: f64, value: f64 },

    #[error("eigensolver failed to converge")]
    Eigensolver,

    #[error("M - iwI is singular at w = {w:e} rad/s")]
    SingularMatrix { w: f64 },

    #[error("two-mode dimension {dim} exceeds configured cap {cap}")]
    MemoryBudget { dim: usize, cap: usize },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
