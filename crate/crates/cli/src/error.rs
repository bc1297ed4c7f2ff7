use oodlinker::Error;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Internal(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    code: u8,
    message: String,
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Checkpoint(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Internal(_) => "internal",
            CliError::Input(_) => "input",
            CliError::Checkpoint(_) => "checkpoint",
        }
    }

    /// Single-line JSON object for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ErrorLine {
            error: self.kind(),
            code: self.code(),
            message: self.to_string(),
        })
        .expect("error line serializes")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Checkpoint(_) => CliError::Checkpoint(e.to_string()),
            Error::Numeric(_) | Error::UndefinedMetric(_) | Error::Shape { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// Reclassifies any failure as internal, for writes to the output directory.
pub fn internal<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Internal(e.to_string()))
}

/// Reclassifies any failure as a checkpoint error.
pub fn checkpoint<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Checkpoint(e.to_string()))
}
