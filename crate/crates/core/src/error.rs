use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants map onto the CLI exit codes: numeric failures exit with 2,
/// everything else that is a user-correctable input problem exits with 1.
#[derive(Debug, Error)]
pub enum FgpError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("state error: {0}")]
    State(String),

    #[error("out of vocabulary: no known tokens in {0:?}")]
    OutOfVocabulary(String),

    #[error("classifier bank is frozen; refusing to apply updates")]
    FrozenBank,

    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FgpError {
    pub fn domain(msg: impl Into<String>) -> Self {
        FgpError::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        FgpError::Numeric(msg.into())
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        FgpError::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        FgpError::Validation(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        FgpError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by non-finite arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, FgpError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, FgpError>;
