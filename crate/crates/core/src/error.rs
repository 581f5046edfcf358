use thiserror::Error;

use crate::model::TacticId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error{}: {field}: {message}", rally.map(|r| format!(" in rally {r}")).unwrap_or_default())]
    Validation {
        rally: Option<u64>,
        field: String,
        message: String,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("conflicting constraints: {first} vs {second}")]
    ConflictingConstraints { first: String, second: String },

    #[error("unknown tactic id {0}")]
    UnknownTactic(TacticId),

    #[error("tactic {0} is pinned and cannot be adjusted")]
    PinnedTactic(TacticId),

    #[error("no candidates: {0}")]
    NoCandidates(String),

    #[error("stale version: diff was computed against version {expected}, session is at {actual}")]
    StaleVersion { expected: u64, actual: u64 },

    #[error("nothing to undo")]
    EmptyHistory,

    #[error("could not parse suggestion; nearest templates: {}", nearest.join(" | "))]
    Unparsed { nearest: Vec<String> },

    #[error("unknown reference '{0}'")]
    UnknownReference(String),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(rally: Option<u64>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            rally,
            field: field.into(),
            message: message.into(),
        }
    }

    /// Machine-readable code used by the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Unparsed { .. } | Error::UnknownReference(_) => "UNPARSED",
            Error::StaleVersion { .. } => "STALE_VERSION",
            Error::NoCandidates(_) => "NO_CANDIDATES",
            _ => "VALIDATION",
        }
    }
}
