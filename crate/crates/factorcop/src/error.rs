//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by data ingestion, model validation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// A required CSV column is missing from the header.
    #[error("schema error: missing column `{0}`")]
    Schema(String),

    /// A cell failed to parse; the row number is 1-based and counts the
    /// header as row 1.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The dataset has no subjects or no observations.
    #[error("empty dataset")]
    EmptyDataset,

    /// An optimizer exhausted its iteration budget or ran into a
    /// degenerate optimum. `best` carries the best iterate found so far
    /// on the natural parameter scale.
    #[error("did not converge: {what} (best objective {objective})")]
    NonConvergence {
        what: String,
        best: Vec<f64>,
        objective: f64,
    },

    /// A matrix required by the variance machinery is numerically
    /// singular.
    #[error("singular matrix in {0}; consider more data or a simpler model")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
