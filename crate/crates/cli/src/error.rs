use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The request cannot be run as asked: bad config, incompatible
    /// experiment, unreadable input.
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(#[source] nmsse::Error),
    #[error("run failed: {0}")]
    Run(#[source] nmsse::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Output { .. } => 1,
        }
    }
}

impl From<nmsse::Error> for CliError {
    fn from(e: nmsse::Error) -> Self {
        match e {
            nmsse::Error::Incompatible(_) => CliError::Usage(e.to_string()),
            other => CliError::Run(other),
        }
    }
}
