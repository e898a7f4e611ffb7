//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, filtering, estimation, and
/// forecasting.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An argument was outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs were structurally inconsistent (lengths, shapes, alignment).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A computation produced a non-finite or inconsistent value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An optimizer failed to converge within its iteration budget.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
