use std::path::Path;

use serde::Serialize;

/// A failure reported on stderr as `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            exit_code: 1,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            exit_code: 2,
            ..Self::new("Usage", message)
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("Io", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<obfair::Error> for CliError {
    fn from(e: obfair::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}
