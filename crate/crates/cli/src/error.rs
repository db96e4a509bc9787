use figdesign::FigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Fig(#[from] FigError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 2 config or usage, 3 failed reproduce assertion,
    /// 4 numerical or capacity failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Fig(FigError::Input(_)) => 2,
            CliError::Assertion(_) => 3,
            CliError::Fig(_) => 4,
        }
    }
}
