use std::fmt::Display;

use taxfund_core::artifacts::ArtifactError;
use taxfund_core::data::DataError;

/// A failure reported to the caller as `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into(), details: None }
    }

    pub fn to_json(&self) -> String {
        let mut body = serde_json::json!({ "code": self.code, "message": self.message });
        if let Some(d) = &self.details {
            body["details"] = d.clone();
        }
        serde_json::json!({ "error": body }).to_string()
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        let code = match &e {
            ArtifactError::MissingStage { .. } => "missing_stage",
            ArtifactError::MissingFile(_) => "missing_file",
            ArtifactError::Io { .. } => "io",
            ArtifactError::Json { .. } => "invalid_json",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Rejected { ref issues } => {
                let details = serde_json::to_value(issues).ok();
                CliError { code: "rejected_input", message: e.to_string(), details }
            }
            DataError::MissingFile(_) => CliError::new("missing_file", e.to_string()),
            DataError::Io { .. } => CliError::new("io", e.to_string()),
            _ => CliError::new("invalid_input", e.to_string()),
        }
    }
}

/// Attach an error code to any displayable error.
pub trait OrCode<T> {
    fn or_code(self, code: &'static str) -> Result<T, CliError>;
}

impl<T, E: Display> OrCode<T> for Result<T, E> {
    fn or_code(self, code: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(code, e.to_string()))
    }
}
