use std::path::PathBuf;

use serde_json::json;

/// Failures surfaced by the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {}: {message}", path.display())]
    Format {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Core(#[from] hhsae_core::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format {
            what,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Diverged { .. } => "diverged",
            CliError::Core(hhsae_core::Error::Data(_)) => "data",
            CliError::Core(_) => "invalid_argument",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Io { .. } | CliError::Format { .. } => 4,
            CliError::Diverged { .. } => 5,
            CliError::Core(_) => 6,
        }
    }

    /// Machine-readable description printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Config { key, .. } => v["key"] = json!(key),
            CliError::MissingArtifact { path, .. } | CliError::Io { path, .. } | CliError::Format { path, .. } => {
                v["path"] = json!(path.display().to_string())
            }
            _ => {}
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
