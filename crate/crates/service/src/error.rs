use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use curation_core::adapt::{AdaptError, ConfigError};
use curation_core::corpus::CorpusError;
use curation_core::eval::EvalError;
use curation_core::feedback::FeedbackError;
use curation_core::lang::LangError;
use curation_core::rank::RankError;
use serde_json::json;

/// An error response: HTTP status, a stable machine-readable code and a
/// human message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn ingesting() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "ingesting", "a corpus upload is being ingested; retry shortly")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Conflict { .. } => Self::conflict("document_conflict", e.to_string()),
            CorpusError::UnknownDoc(_) => Self::not_found("unknown_document", e.to_string()),
            CorpusError::Malformed { .. } => Self::bad_request("malformed_jsonl", e.to_string()),
            CorpusError::Io(_) => Self::bad_request("unreadable_upload", e.to_string()),
        }
    }
}

impl From<LangError> for ApiError {
    fn from(e: LangError) -> Self {
        Self::bad_request("invalid_rule", e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownConcept { .. } => Self::bad_request("unknown_concept", e.to_string()),
            EvalError::Rule(_) => Self::bad_request("invalid_rule", e.to_string()),
        }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::bad_request("invalid_config", e.to_string())
    }
}

impl From<RankError> for ApiError {
    fn from(e: RankError) -> Self {
        match e {
            RankError::UnknownConcept(_) => Self::bad_request("unknown_concept", e.to_string()),
            RankError::UnknownDoc(_) => Self::not_found("unknown_document", e.to_string()),
            RankError::Syntax { .. } => Self::bad_request("concept_rule_syntax", e.to_string()),
            _ => Self::bad_request("invalid_preference", e.to_string()),
        }
    }
}

impl From<FeedbackError> for ApiError {
    fn from(e: FeedbackError) -> Self {
        match e {
            FeedbackError::UnknownTask(_) => Self::not_found("unknown_task", e.to_string()),
            FeedbackError::DuplicateTask(_) => Self::conflict("duplicate_task", e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<AdaptError> for ApiError {
    fn from(e: AdaptError) -> Self {
        match e {
            AdaptError::Eval(e) => e.into(),
            AdaptError::Config(e) => e.into(),
            AdaptError::Feedback(e) => e.into(),
            AdaptError::StaleRound { .. } => Self::conflict("stale_round", e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}
