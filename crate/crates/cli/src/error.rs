use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{check}: {source}")]
    Model {
        check: String,
        #[source]
        source: opbns::Error,
    },
    #[error("{check}: {detail}")]
    Stats { check: String, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Names the sub-check a core error came from.
pub trait Context<T> {
    fn ctx(self, check: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for opbns::Result<T> {
    fn ctx(self, check: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Model { check: check.into(), source })
    }
}
