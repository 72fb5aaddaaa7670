//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by model construction, estimation, policies, experiments,
/// and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-range or non-finite
    /// parameter.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The regression design is numerically rank-deficient.
    #[error("singular design: condition number {cond:.3e} exceeds 1e12")]
    SingularDesign { cond: f64 },

    /// A subgroup required by a fair policy has no observations.
    #[error("subgroup z={z} has no records; fair policy undefined without both subgroup CDFs")]
    MissingSubgroup { z: u8 },

    /// Population CSV did not match the expected schema.
    #[error("population csv, row {row}: {reason}")]
    CsvFormat { row: usize, reason: String },

    /// A run-configuration file is malformed or incomplete.
    #[error("config: {0}")]
    Config(String),

    /// An experiment exceeded its replication failure budget or was
    /// otherwise unable to produce a result.
    #[error("experiment: {0}")]
    Experiment(String),

    /// A numerical routine produced a non-finite intermediate.
    #[error("numeric: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
