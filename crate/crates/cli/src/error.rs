use serde_json::json;
use thiserror::Error;

use cutfem::CutFemError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{message}", key.as_deref().map(|k| format!("{k}: ")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    #[error(transparent)]
    Solver(#[from] CutFemError),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            key: Some(key.into()),
            message: message.into(),
        }
    }

    /// Exit status: 2 for configuration errors, 1 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        let (kind, key) = match self {
            CliError::Config { key, .. } => ("config", key.clone()),
            CliError::Solver(_) => ("solver", None),
            CliError::Runtime(_) => ("runtime", None),
            CliError::Io(_) => ("io", None),
        };
        let message = match self {
            CliError::Config { message, .. } => message.clone(),
            other => other.to_string(),
        };
        json!({ "status": "error", "kind": kind, "key": key, "message": message })
    }
}
