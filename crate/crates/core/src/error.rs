use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size underflow at s = {s:.6e} (h = {h:.3e})")]
    StepUnderflow { s: f64, h: f64 },

    #[error("no event found before horizon s = {horizon}")]
    NoEvent { horizon: f64 },

    #[error("{method} did not converge after {iterations} iterations (defect {defect:.3e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        defect: f64,
        /// Best (zeta, E) iterate seen, when available.
        best: Option<(f64, f64)>,
    },

    #[error("least-squares residual increased monotonically; guess outside basin")]
    Basin,

    #[error("structural defect in {what}: {defect:.3e} exceeds {limit:.1e}")]
    StructuralDefect {
        what: &'static str,
        defect: f64,
        limit: f64,
    },

    #[error("infeasible section seed: {0}")]
    Infeasible(String),

    #[error("root not found: {0}")]
    RootNotFound(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
