//! Error type shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Numerical routines report rather than saturate: an overflowing closed form
/// or an exhausted quadrature budget is an error the caller can react to, not
/// a silent `inf`/`NaN`.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter fell outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A function argument fell outside the mathematical domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// Mismatched or unsupported dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An intermediate value exceeded the representable floating-point range.
    #[error("numerical overflow in {0}")]
    Overflow(&'static str),

    /// Adaptive quadrature exhausted its subdivision budget above tolerance.
    #[error(
        "integral did not converge: error estimate {error:.3e} after {subdivisions} subdivisions"
    )]
    NonIntegrable { error: f64, subdivisions: usize },

    /// The tail-probability denominator is numerically zero.
    #[error("degenerate denominator: 1 - K(beta) = {0:.3e}")]
    DegenerateDenominator(f64),

    /// A rejection-based estimator kept too few samples to be meaningful.
    #[error("insufficient acceptance: {kept} of {total} samples in the conditioning set")]
    InsufficientAcceptance { kept: usize, total: usize },

    /// Expected-shortfall estimate has no exceedances beyond the quantile.
    #[error("no exceedances beyond the {0} quantile")]
    EmptyTail(f64),

    /// Requested rank correlation is not attainable for the family.
    #[error("tau {tau} is outside the attainable range ({lo}, {hi}) for {family}")]
    UnattainableTau {
        family: &'static str,
        tau: f64,
        lo: f64,
        hi: f64,
    },

    /// An iterative optimiser or root finder stopped without meeting its
    /// convergence test.
    #[error("optimisation did not converge: {0}")]
    NonConvergence(String),

    /// The volatility recursion parameters sit on or beyond the
    /// covariance-stationarity boundary.
    #[error("stationarity violation: c1 + d1 = {0} >= 1")]
    Stationarity(f64),

    /// Malformed input data (CSV, config, or serialized model).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Semantically invalid input data.
    #[error("invalid data: {0}")]
    Data(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(format!("csv: {e}"))
    }
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
