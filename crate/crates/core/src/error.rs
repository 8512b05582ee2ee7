use thiserror::Error;

/// Errors produced by the registration library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} lies outside the domain [0, 1]")]
    Domain { value: f64 },

    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("undefined PRD: the reconstructed curve has zero energy")]
    UndefinedPrd,

    #[error("warp parameter violates monotonicity: {0}")]
    NonMonotone(String),

    #[error("reference selection failed: {0}")]
    ReferenceSelection(String),

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
