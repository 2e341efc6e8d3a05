use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Map, Value};

use weaklab::corpus::Violation;
use weaklab::denoiser::DenoiseError;
use weaklab::evaluation::EvalError;
use weaklab::project_dir::ProjectIoError;
use weaklab::weak_sources::SourceError;

use crate::bridge::BridgeError;
use crate::store::{FlushError, StoreError};

/// An error response: `{"error": code, "message": ..., ...details}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown {what} {id:?}"))
            .with("kind", what)
            .with("id", id)
    }

    pub fn validation(violations: &[Violation]) -> Self {
        Self::bad_request("ValidationFailed", format!("{} violation(s)", violations.len()))
            .with("violations", serde_json::to_value(violations).unwrap_or_default())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn body(&self) -> Value {
        let mut m = Map::new();
        m.insert("error".into(), json!(self.code));
        m.insert("message".into(), json!(self.message));
        for (k, v) in &self.details {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.status.as_u16(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<SourceError> for ApiError {
    fn from(e: SourceError) -> Self {
        let code = match &e {
            SourceError::UnknownLabel(_) => "UnknownLabel",
            SourceError::PatternSyntax(_) => "PatternSyntax",
            SourceError::InvalidSource { .. } => "InvalidSource",
        };
        let err = ApiError::bad_request(code, e.to_string());
        match e {
            SourceError::PatternSyntax(p) => err.with("pattern_error", p.message),
            _ => err,
        }
    }
}

impl From<DenoiseError> for ApiError {
    fn from(e: DenoiseError) -> Self {
        let code = match &e {
            DenoiseError::NoSources => "NoSources",
            DenoiseError::NoDocuments => "NoDocuments",
            DenoiseError::MissingLayer(l) => return ApiError::not_found("layer", l),
            DenoiseError::DegenerateLikelihood { .. } => "DegenerateLikelihood",
            DenoiseError::Dimension(_) => "Dimension",
            DenoiseError::UnknownLabel(_) => "UnknownLabel",
            DenoiseError::Overlap { .. } => "Overlap",
            DenoiseError::InvalidParams(_) => "InvalidParams",
            DenoiseError::InvalidConfig(_) => "InvalidConfig",
            DenoiseError::Cancelled => "Cancelled",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingLayer(l) => ApiError::not_found("layer", &l),
            EvalError::Denoise(d) => d.into(),
            EvalError::InvalidConfig(m) => ApiError::bad_request("InvalidConfig", m),
            other => ApiError::bad_request("EvaluationFailed", other.to_string()),
        }
    }
}

impl From<ProjectIoError> for ApiError {
    fn from(e: ProjectIoError) -> Self {
        match e {
            ProjectIoError::BadName(n) => ApiError::bad_request("BadName", format!("invalid name {n:?}")),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<FlushError> for ApiError {
    fn from(e: FlushError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "IoError", e.to_string())
            .with("report", serde_json::to_value(&e).unwrap_or_default())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownDocument(d) => ApiError::not_found("document", &d),
            StoreError::UnknownSource(s) => ApiError::not_found("source", &s),
            StoreError::Invalid(v) => ApiError::validation(&v),
            StoreError::Conflict { current, given } => ApiError::new(
                StatusCode::CONFLICT,
                "Conflict",
                format!("version {given} is stale, current is {current}"),
            )
            .with("current_version", current),
            StoreError::SourceExists(id) => ApiError::new(
                StatusCode::CONFLICT,
                "SourceExists",
                format!("source {id:?} exists with a different definition"),
            ),
            StoreError::Source(s) => s.into(),
            StoreError::Io(m) => ApiError::internal(m),
        }
    }
}

impl From<BridgeError> for ApiError {
    fn from(e: BridgeError) -> Self {
        let gateway = |code| ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string());
        match &e {
            BridgeError::InvalidConfig(_) => ApiError::bad_request("InvalidConfig", e.to_string()),
            BridgeError::UnknownModel(n) => ApiError::not_found("model", n),
            BridgeError::UnknownDocument(d) => ApiError::not_found("document", d),
            BridgeError::UnknownLayer(l) => ApiError::not_found("layer", l),
            BridgeError::InvalidLayer(_) => ApiError::bad_request("InvalidLayer", e.to_string()),
            BridgeError::Timeout { after_ms } => gateway("Timeout").with("after_ms", *after_ms),
            BridgeError::BadResponse { path, reason } => gateway("BadResponse")
                .with("path", path.as_str())
                .with("reason", reason.as_str()),
            BridgeError::RemoteError { status, body } => gateway("RemoteError")
                .with("status", *status)
                .with("body", body.as_str()),
            BridgeError::Transport(_) => gateway("Transport"),
            BridgeError::Store(s) => s.clone().into(),
        }
    }
}
