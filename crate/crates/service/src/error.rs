use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use moon_core::notebook::NotebookError;
use moon_core::script::{SyntaxError, ValidationReport};
use moon_core::session::SessionError;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

/// Every failure the service reports. Each maps to one status code and a
/// JSON body `{"error": {"code": ..., "message": ..., ...}}`.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("script does not match the notebook")]
    Invalid(ValidationReport),
    #[error("{0}")]
    Compile(String),
    #[error(transparent)]
    Notebook(#[from] NotebookError),
}

#[derive(Serialize)]
struct Span {
    start: usize,
    end: usize,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::Forbidden(_) => "forbidden",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Syntax(_) => "syntax",
            ApiError::Invalid(_) => "invalid_script",
            ApiError::Compile(_) => "compile",
            ApiError::Notebook(_) => "notebook",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::Invalid(_) | ApiError::Compile(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(_) | ApiError::Syntax(_) | ApiError::Notebook(_) => {
                StatusCode::BAD_REQUEST
            }
        }
    }

    pub fn body(&self) -> serde_json::Value {
        let mut error = json!({ "code": self.code(), "message": self.to_string() });
        match self {
            ApiError::Syntax(e) => {
                error["message"] = json!(e.message);
                error["span"] = json!(Span {
                    start: e.span.start,
                    end: e.span.end
                });
            }
            ApiError::Invalid(report) => error["issues"] = json!(report.issues),
            _ => {}
        }
        json!({ "error": error })
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Invalid(report) => ApiError::Invalid(report),
            SessionError::Compile(e) => ApiError::Compile(e.to_string()),
            SessionError::Notebook(e) => ApiError::Notebook(e),
            SessionError::Forbidden(_) => ApiError::Forbidden(e.to_string()),
            SessionError::UnknownCell(_) | SessionError::NotCode(_) => {
                ApiError::BadRequest(e.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
