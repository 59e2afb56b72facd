use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation undefined for the zero filter")]
    ZeroFilter,

    #[error("root {modulus} lies on or outside the unit circle")]
    RootOutsideUnitCircle { modulus: f64 },

    #[error("normalization impossible: coefficient at index 0 is zero")]
    NormalizationImpossible,

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    RootFinderDiverged { iterations: usize, residual: f64 },

    #[error("insufficient margin: {0}")]
    InsufficientMargin(String),

    #[error("degenerate observation: {0}")]
    Degenerate(String),

    #[error("exact enumeration over {support} entries exceeds the limit of {limit}")]
    EnumerationTooLarge { support: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::ZeroFilter => "zero-filter",
            Error::RootOutsideUnitCircle { .. } => "root-outside-unit-circle",
            Error::NormalizationImpossible => "normalization-impossible",
            Error::RootFinderDiverged { .. } => "root-finder-diverged",
            Error::InsufficientMargin(_) => "insufficient-margin",
            Error::Degenerate(_) => "degenerate",
            Error::EnumerationTooLarge { .. } => "enumeration-too-large",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
