//! Command-line error type: wraps library errors and scenario problems,
//! maps everything onto the documented exit codes, and renders a
//! structured JSON object for stderr.

use qmemtime_core::ErrorClass;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Scenario file failed validation; all failures are listed.
    Scenario { failures: Vec<String> },
    /// Scenario file is not valid JSON.
    Parse {
        message: String,
        line: usize,
        column: usize,
    },
    /// File system problem (unreadable scenario, unwritable output).
    Io { path: String, message: String },
    /// Request not supported for the scenario kind (e.g. coupling
    /// optimization of a single oscillator).
    Unsupported { message: String },
    /// Error from the computation library.
    Core(qmemtime_core::Error),
    /// One or more verification checks failed.
    VerifyFailed { failed: Vec<String> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario { .. }
            | CliError::Parse { .. }
            | CliError::Io { .. }
            | CliError::Unsupported { .. } => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::InfeasibleIsolation => 4,
            },
            CliError::VerifyFailed { .. } => 3,
        }
    }

    fn class_name(&self) -> &'static str {
        match self {
            CliError::Scenario { .. } | CliError::Parse { .. } => "validation",
            CliError::Io { .. } => "io",
            CliError::Unsupported { .. } => "validation",
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => "validation",
                ErrorClass::Numeric => "numeric",
                ErrorClass::InfeasibleIsolation => "infeasible_isolation",
            },
            CliError::VerifyFailed { .. } => "verification",
        }
    }

    /// One-line JSON rendering for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "class": self.class_name(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        });
        match self {
            CliError::Scenario { failures } => {
                body["failures"] = json!(failures);
            }
            CliError::Parse { line, column, .. } => {
                body["line"] = json!(line);
                body["column"] = json!(column);
            }
            CliError::VerifyFailed { failed } => {
                body["failed_checks"] = json!(failed);
            }
            _ => {}
        }
        json!({ "error": body })
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Scenario { failures } => format!(
                "scenario validation failed with {} problem(s): {}",
                failures.len(),
                failures.join("; ")
            ),
            CliError::Parse {
                message,
                line,
                column,
            } => {
                format!("scenario parse error at line {line}, column {column}: {message}")
            }
            CliError::Io { path, message } => format!("{path}: {message}"),
            CliError::Unsupported { message } => message.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::VerifyFailed { failed } => {
                format!("{} verification check(s) failed: {}", failed.len(), failed.join(", "))
            }
        }
    }
}

impl From<qmemtime_core::Error> for CliError {
    fn from(e: qmemtime_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
