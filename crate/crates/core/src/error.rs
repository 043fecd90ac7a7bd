use thiserror::Error;

/// Errors raised by the pricing, calibration and ingestion routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is only defined when the fee ratio clears the deposit threshold.
    #[error(
        "unsupported regime: fee ratio {gamma_hat:e} is below the deposit threshold {gamma_star:e}"
    )]
    UnsupportedRegime { gamma_hat: f64, gamma_star: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    /// The block interval exceeds the critical interval, so G' has no root.
    #[error(
        "no critical volatility: block interval {dt:e}y exceeds the critical interval {dt_bar:e}y"
    )]
    NoCriticalPoint { dt: f64, dt_bar: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid invariant: {0}")]
    InvalidInvariant(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
