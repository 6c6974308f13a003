use thiserror::Error;

/// CLI failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable or inconsistent data (exit code 3).
    #[error("data error: {0}")]
    Data(String),
    #[error("reports were produced on different folds: {0}")]
    FoldMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::FoldMismatch(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<mscrf_core::Error> for CliError {
    fn from(e: mscrf_core::Error) -> Self {
        use mscrf_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::Manifest(_) | E::NonMetricPairwise | E::WrongMode => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
