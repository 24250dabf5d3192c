use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum CadeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("record {id}: cannot resolve digit {digit} (no completions and no view values)")]
    UnresolvableRegression { id: String, digit: String },

    #[error("record {id}: malformed {field}: {reason}")]
    MalformedRecord {
        id: String,
        field: String,
        reason: String,
    },

    #[error("unknown indicator `{0}`")]
    UnknownIndicator(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}record {id}: invalid {field}: {message}", line_prefix(*.line))]
    Validation {
        line: Option<usize>,
        id: String,
        field: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("endpoint unavailable after {attempts} attempts: {last_error}")]
    EndpointUnavailable { attempts: u32, last_error: String },
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

impl CadeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CadeError::InvalidInput(msg.into())
    }

    pub(crate) fn validation(id: &str, field: &str, message: impl Into<String>) -> Self {
        CadeError::Validation {
            line: None,
            id: id.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// I/O error that names the file involved.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        CadeError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }

    /// Attach a 1-based input line number to a validation error.
    pub fn at_line(self, line: usize) -> Self {
        match self {
            CadeError::Validation {
                id, field, message, ..
            } => CadeError::Validation {
                line: Some(line),
                id,
                field,
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CadeError>;
