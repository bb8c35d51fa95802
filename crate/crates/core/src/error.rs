use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or design parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Structurally inconsistent input (dimension mismatch, empty pool, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The regression design matrix is rank deficient.
    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    /// A numeric factorization failed beyond recoverable jitter.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The requested operation is not defined for the given inputs.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// A study replicate failed; wraps the underlying error with its index.
    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed record in a CSV input, with its 1-based row number.
    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_replicate(self, replicate: usize) -> Self {
        Error::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}
