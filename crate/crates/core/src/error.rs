use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by how a frontend should react: bad input data,
/// bad configuration/arguments, or a numerical failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("solver failed: {0}")]
    Solver(String),
}

impl Error {
    /// True for errors caused by the input data rather than by settings.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Schema(_) | Error::Data(_) | Error::DegenerateGeometry(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
