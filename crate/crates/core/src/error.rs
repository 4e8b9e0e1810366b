//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A feature vector with no strictly positive component where one is
    /// required (normalization, observation variance).
    #[error("all-zero feature vector{}: {reason}", fmt_ctx(.context))]
    ZeroVector {
        context: Option<String>,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Probabilities that should form a distribution do not.
    #[error("probabilities must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidProbabilities { sum: f64 },

    #[error("item distribution is empty")]
    EmptyDistribution,

    #[error("covariance matrix is not symmetric positive semidefinite: {message}")]
    InvalidCovariance { message: String },

    /// Conditioning submatrix stayed singular after PSD repair.
    #[error(
        "singular conditioning submatrix after repair (condition number {condition_number:.3e})"
    )]
    SingularConditioning { condition_number: f64 },

    #[error("negative variance form X'SX = {value} (below -1e-10)")]
    NegativeVarianceForm { value: f64 },

    #[error("projection magnitude must be nonnegative, got {value}")]
    NegativeMagnitude { value: f64 },

    #[error("invalid grid configuration: {message}")]
    InvalidGrid { message: String },

    #[error(
        "value iteration did not converge within {iterations} iterations \
         (last residual {residual:.3e}, threshold {threshold:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        threshold: f64,
    },

    /// Data-file ingestion failure; message carries offending rows.
    #[error("ingestion error: {message}")]
    Ingestion { message: String },

    #[error("configuration error: {message}")]
    Config { message: String },

    #[error("value grid dump is malformed: {message}")]
    GridFormat { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_ctx(ctx: &Option<String>) -> String {
    match ctx {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }

    pub fn ingestion(message: impl Into<String>) -> Self {
        Error::Ingestion {
            message: message.into(),
        }
    }
}
