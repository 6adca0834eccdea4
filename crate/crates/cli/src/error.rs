use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_REFUTED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qmeas_core::Error),
    #[error("writing {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config-error",
            CliError::Core(e) => e.code(),
            CliError::Output { .. } => "output-io",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Output { .. } => EXIT_NUMERIC,
            CliError::Core(e) => match e.code() {
                "invalid-grid" | "invalid-argument" | "malformed-input" | "io" | "csv" | "length-mismatch" | "grid-mismatch" => {
                    EXIT_CONFIG
                }
                _ => EXIT_NUMERIC,
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": crate::report::SCHEMA_VERSION,
            "error": { "code": self.code(), "message": self.message() },
        })
    }
}
