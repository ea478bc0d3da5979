use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Wire-level error class. Each maps to exactly one HTTP status in the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    NotFound,
    Conflict,
    IllegalTransition,
    InsufficientData,
    Storage,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{what} not found: {id}")]
    NotFound { what: &'static str, id: String },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("illegal transition for plate {plate_id}: {from} -> {to}")]
    IllegalTransition {
        plate_id: String,
        from: String,
        to: String,
    },

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("storage: {0}")]
    Storage(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { what, id: id.into() }
    }

    pub fn insufficient(what: impl Into<String>, needed: usize, got: usize) -> Self {
        Error::InsufficientData {
            what: what.into(),
            needed,
            got,
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Validation { .. }
            | Error::UndefinedRate(_)
            | Error::ContractViolation(_)
            | Error::Image(_) => ErrorCode::Validation,
            Error::NotFound { .. } => ErrorCode::NotFound,
            Error::Conflict(_) | Error::Precondition(_) => ErrorCode::Conflict,
            Error::IllegalTransition { .. } => ErrorCode::IllegalTransition,
            Error::InsufficientData { .. } => ErrorCode::InsufficientData,
            Error::Storage(_) | Error::Io(_) | Error::Json(_) => ErrorCode::Storage,
        }
    }
}
