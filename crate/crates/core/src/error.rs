use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates a documented precondition.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("cannot convert {from} to {to}: dimension mismatch")]
    DimensionMismatch {
        from: &'static str,
        to: &'static str,
    },

    /// Query outside the usable (inset) extent of a speed field.
    #[error("{axis}={value} outside valid range [{min}, {max}]")]
    OutOfDomain {
        axis: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("incomplete rate table, missing: {}", .missing.join(", "))]
    IncompleteRateTable { missing: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    /// The smoothing QP reported infeasibility on a reference that is
    /// feasible by construction.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
