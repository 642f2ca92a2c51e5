use thiserror::Error;

/// Errors raised by the model, engine and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for `{name}`: expected {expected}, got {got}")]
    DimensionMismatch {
        name: &'static str,
        expected: String,
        got: String,
    },

    #[error("no control authority: {0}")]
    NoControlAuthority(String),

    #[error("no stationary density: {0}")]
    NoStationaryDensity(String),

    #[error("moment of order {q} diverges (tail exponent {alpha})")]
    MomentDivergence { q: f64, alpha: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unstable: {0}")]
    Unstable(String),

    #[error("no stabilizing gain with finite cost: {0}")]
    EmptyWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(name, reason))
    }
}
