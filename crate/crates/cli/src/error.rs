use std::fmt;
use std::path::Path;

use patexpand_core::corpus::CorpusError;
use patexpand_core::crowd::CrowdError;
use patexpand_core::embedding::EmbeddingError;
use patexpand_core::eval::EvalError;
use patexpand_core::expansion::ExpansionError;
use patexpand_service::ServiceError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Internal,
            message: message.into(),
        }
    }

    pub fn read(path: &Path, e: impl fmt::Display) -> Self {
        Self::data(format!("cannot read {}: {e}", path.display()))
    }

    pub fn write(path: &Path, e: impl fmt::Display) -> Self {
        Self::internal(format!("cannot write {}: {e}", path.display()))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::InvalidParams(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ExpansionError> for CliError {
    fn from(e: ExpansionError) -> Self {
        match e {
            ExpansionError::InvalidRequest(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MismatchedK(..) | EvalError::InvalidK => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<CrowdError> for CliError {
    fn from(e: CrowdError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Bind { .. } | ServiceError::Io(_) => Self::internal(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}
