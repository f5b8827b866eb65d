use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} outside domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("eigensolver did not converge at delta = {delta}, N = {n}")]
    NoConvergence { delta: f64, n: usize },

    #[error("step budget exhausted: tolerance unattainable near t in [{t_start}, {t_end}]")]
    StepBudget { t_start: f64, t_end: f64 },

    #[error("no separatrix at delta = {delta}")]
    NoSeparatrix { delta: f64 },

    #[error("energy contour at E = {energy} is not a closed regular orbit: {reason}")]
    BadContour { energy: f64, reason: String },

    #[error("area growth rates at delta = {delta} do not match the crossing pattern (dA_u = {du}, dA_l = {dl}, dA_o = {do_})")]
    GrowthPattern { delta: f64, du: f64, dl: f64, do_: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
