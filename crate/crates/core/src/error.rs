use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite value in column '{column}' at row {row}")]
    NonFinite { row: usize, column: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the input data rather than the solver.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidData(_) | Error::NonFinite { .. } | Error::Io(_) | Error::Csv(_)
        )
    }
}
