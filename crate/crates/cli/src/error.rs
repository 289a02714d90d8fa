use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format { path: path.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Validation(_) => 3,
            Self::Io { .. } | Self::Format { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Validation(_) => "validation",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            kind: &'a str,
            exit_code: i32,
            message: String,
        }
        let inner = Record { kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() };
        serde_json::json!({ "error": inner }).to_string()
    }
}

impl From<mcvd_core::Error> for CliError {
    fn from(e: mcvd_core::Error) -> Self {
        match e {
            mcvd_core::Error::Invariant(_) | mcvd_core::Error::Metric(_) => Self::Validation(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}
