use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a stated invariant.
    #[error("invalid configuration: {field}: {constraint}")]
    Config { field: String, constraint: String },

    #[error("argument out of range: {0}")]
    Argument(String),

    /// A closed form was queried where the construction gives no guarantee.
    #[error("outside analytic region: {0}")]
    OutsideAnalyticRegion(String),

    #[error("iterate diverged (non-finite) at step t={step}")]
    Divergence { step: usize },

    #[error("unsupported operation: {0}")]
    Capability(String),

    /// A bound or check was requested outside the step-size range it is valid for.
    #[error("step-size regime violated: {0}")]
    Regime(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}
