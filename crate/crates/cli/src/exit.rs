use std::fmt;

/// Failure classes and their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or arguments (exit 2).
    Config(String),
    /// Input data that cannot be used (exit 3).
    Data(String),
    /// Chains did not converge (exit 4); outputs are still written.
    Convergence(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Convergence(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
        }
    }
}

impl From<epiforecast::Error> for CliError {
    fn from(e: epiforecast::Error) -> Self {
        use epiforecast::Error;
        match e {
            Error::Data(m) => CliError::Data(m),
            Error::Config(m) => CliError::Config(m),
            Error::Parse { .. } | Error::Schema(_) | Error::DegenerateGeometry(_) => CliError::Data(e.to_string()),
            Error::Initialization(_) => CliError::Convergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}
