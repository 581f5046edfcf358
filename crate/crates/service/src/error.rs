use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// Error payload returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    /// Example utterances of the closest templates, for `UNPARSED`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nearest: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                nearest: Vec::new(),
            },
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", what)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl From<steermine::Error> for ApiError {
    fn from(e: steermine::Error) -> Self {
        use steermine::Error as E;
        let status = match &e {
            E::Unparsed { .. } | E::UnknownReference(_) | E::NoCandidates(_) => StatusCode::UNPROCESSABLE_ENTITY,
            E::StaleVersion { .. } | E::EmptyHistory => StatusCode::CONFLICT,
            E::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let nearest = match &e {
            E::Unparsed { nearest } => nearest.clone(),
            _ => Vec::new(),
        };
        let code = match &e {
            E::Io(_) => "INTERNAL",
            _ => e.code(),
        };
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: e.to_string(),
                nearest,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
