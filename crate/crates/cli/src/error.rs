use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Json,
    DuplicateKey,
    DomainMixing,
    MissingDraw,
}

impl ParseErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ParseErrorKind::Json => "json",
            ParseErrorKind::DuplicateKey => "duplicate_key",
            ParseErrorKind::DomainMixing => "domain_mixing",
            ParseErrorKind::MissingDraw => "missing_draw",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}:{line}: {message}")]
    Parse { kind: ParseErrorKind, file: String, line: usize, message: String },
    #[error("model `{model}` has no prediction for sample `{sample}` ({file})")]
    Coverage { model: String, sample: String, file: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mutcon::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { kind, .. } => kind.name(),
            CliError::Coverage { .. } => "coverage",
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    /// Machine-readable form written to stderr by the binary.
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Parse { file, line, .. } => {
                body["file"] = json!(file);
                body["line"] = json!(line);
            }
            CliError::Coverage { model, sample, file } => {
                body["file"] = json!(file);
                body["model"] = json!(model);
                body["sample"] = json!(sample);
            }
            CliError::Io { path, .. } => body["file"] = json!(path),
            _ => {}
        }
        json!({ "error": body })
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |e| CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
