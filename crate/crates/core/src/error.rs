use thiserror::Error;

/// Errors raised by the numerical pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("search point {0} is outside the search region")]
    OutOfRegion(String),

    #[error("cholesky factorization failed: jitter would exceed {max_jitter:e} (last tried {last_jitter:e})")]
    FactorizationFailed { last_jitter: f64, max_jitter: f64 },

    #[error("fit did not converge after {iterations} iterations (last nll {last_nll})")]
    NoConvergence { iterations: usize, last_nll: f64 },

    #[error("non-finite likelihood: {0}")]
    NonFiniteLikelihood(String),

    #[error("scan failed at search point {index} ({point}): {source}")]
    ScanFailed {
        index: usize,
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error("negative test statistic t = {t:e} at search point {index}")]
    NegativeTestStatistic { index: usize, t: f64 },

    #[error("covariance diagonal vanishes at point {index}")]
    DegenerateDiagonal { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("z = {z} outside tabulated range [{lo}, {hi}]")]
    OutOfTabulatedRange { z: f64, lo: f64, hi: f64 },

    #[error("t = {t} is within one grid step of the domain boundary [{lo}, {hi}]")]
    DomainBoundary { t: f64, lo: f64, hi: f64 },

    #[error("quadrature not converged: relative change {rel_change:e} after {panels} panels")]
    QuadratureNotConverged { panels: usize, rel_change: f64 },

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("unknown subcommand `{0}`")]
    UnknownSubcommand(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors that come from bad input or usage rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid { .. }
                | Error::UnknownSubcommand(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::ShapeMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
