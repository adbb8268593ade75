use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("index out of bounds: ({row}, {col}) in a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("CG breakdown at iteration {iteration}: p'Ap = {curvature:e} (operator is not positive definite)")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("non-finite value encountered at iteration {iteration}: {what}")]
    NonFinite {
        iteration: usize,
        what: &'static str,
    },

    #[error("{0}")]
    NotConverged(String),

    #[error("oracle size limit exceeded: {n_users}x{n_items} > {limit} entries")]
    OracleTooLarge {
        n_users: usize,
        n_items: usize,
        limit: usize,
    },

    #[error("empty data set: {0}")]
    Empty(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed input ({count} bad lines, budget {budget}); first errors: {details}")]
    Malformed {
        count: usize,
        budget: usize,
        details: String,
    },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
