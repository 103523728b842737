use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use elicit_core::Error;
use serde::Serialize;

/// Error response body: `{"error": code, "message": text}` plus the
/// offending feature name when there is one.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub feature: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<&'a str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            feature: None,
        }
    }

    pub fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn feature(code: &str, name: &str, message: impl Into<String>) -> Self {
        ApiError {
            feature: Some(name.to_string()),
            ..ApiError::unprocessable(code, message)
        }
    }

    pub fn unknown_feature(name: &str) -> Self {
        ApiError::feature("unknown_feature", name, format!("unknown feature `{name}`"))
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    pub fn from_rejection(r: JsonRejection) -> Self {
        ApiError::unprocessable("malformed_body", r.body_text())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Terminal | Error::PendingQuery | Error::NoPendingQuery => StatusCode::CONFLICT,
            Error::Io(_) | Error::Numerical(_) | Error::NonFiniteInitialDensity => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: &self.code,
            message: &self.message,
            feature: self.feature.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}
