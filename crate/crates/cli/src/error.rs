use std::path::Path;

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { kind: &'static str, message: String },
    AllFailed { failed: usize },
}

impl CliError {
    pub fn data(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Data {
            kind,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data("io", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::AllFailed { .. } => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data { kind, .. } => kind,
            CliError::AllFailed { .. } => "all_cases_failed",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data { message, .. } => write!(f, "{message}"),
            CliError::AllFailed { failed } => write!(f, "all {failed} cases failed"),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: u8,
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

/// Machine-readable error on standard output.
pub fn print_error(e: &CliError) {
    let body = ErrorJson {
        error: ErrorBody {
            code: e.exit_code(),
            kind: e.kind(),
            message: e.to_string(),
        },
    };
    println!("{}", serde_json::to_string(&body).expect("error serializes"));
}
