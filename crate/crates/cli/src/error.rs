use std::path::Path;

/// Failures split by exit code: usage errors exit 1, data errors exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub(crate) fn missing(path: &Path, hint: &str) -> Self {
        CliError::Data(format!("missing upstream file {} ({hint})", path.display()))
    }
}

impl From<residuum::Error> for CliError {
    fn from(e: residuum::Error) -> Self {
        match e {
            residuum::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
