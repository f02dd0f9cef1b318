use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use crate::embed::EmbedError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Validation(String),
    #[error("stored session {id} does not replay: {reason}")]
    Replay { id: String, reason: String },
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

impl From<apohf_core::Error> for ServiceError {
    fn from(e: apohf_core::Error) -> Self {
        use apohf_core::Error as E;
        match e {
            E::NoPendingQuery | E::DuplicateSubmit(_) => Self::Conflict(e.to_string()),
            E::Io(io) => Self::Storage(io),
            E::Trial { .. } | E::NonFiniteLoss { .. } => Self::Internal(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict(_) => StatusCode::CONFLICT,
            Self::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Embedding(_) => StatusCode::BAD_GATEWAY,
            Self::Replay { .. } | Self::Storage(_) | Self::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}
