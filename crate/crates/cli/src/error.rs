use serde_json::{json, Map, Value};
use weaklab::corpus::Violation;
use weaklab::denoiser::DenoiseError;
use weaklab::evaluation::EvalError;
use weaklab::project_dir::ProjectIoError;
use weaklab::weak_sources::SourceError;
use weaklab_server::BridgeError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// Invalid or unreadable project data, or data an engine rejected.
    Validation = 1,
    /// Bad flags or references to things that do not exist.
    Usage = 2,
    /// The model server failed or misbehaved.
    Remote = 3,
}

/// A failure reported as one JSON object on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit: Exit,
    pub code: &'static str,
    pub message: String,
    pub details: Map<String, Value>,
}

impl CliError {
    pub fn new(exit: Exit, code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            exit,
            code,
            message: message.into(),
            details: Map::new(),
        }
    }

    pub fn usage(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(Exit::Usage, code, message)
    }

    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(Exit::Validation, code, message)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    pub fn violations(v: &[Violation]) -> Self {
        Self::validation("ValidationFailed", format!("{} violation(s)", v.len()))
            .with("violations", serde_json::to_value(v).unwrap_or_default())
    }

    pub fn json(&self) -> Value {
        let mut m = Map::new();
        m.insert("error".into(), json!(self.code));
        m.insert("message".into(), json!(self.message));
        m.extend(self.details.clone());
        Value::Object(m)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ProjectIoError> for CliError {
    fn from(e: ProjectIoError) -> Self {
        let msg = e.to_string();
        match e {
            ProjectIoError::Ann(errors) => {
                let list: Vec<Value> = errors
                    .iter()
                    .map(|f| json!({"path": f.path.display().to_string(), "error": f.error}))
                    .collect();
                CliError::validation("AnnotationFormat", msg).with("files", list)
            }
            ProjectIoError::Json { path, message } => {
                CliError::validation("BadJson", message).with("path", path.display().to_string())
            }
            ProjectIoError::Io { path, .. } => CliError::validation("IoError", msg).with("path", path.display().to_string()),
            ProjectIoError::BadName(_) => CliError::validation("BadName", msg),
            ProjectIoError::NotAProject(_) => CliError::usage("NotAProject", msg),
        }
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        let msg = e.to_string();
        match e {
            SourceError::UnknownLabel(l) => CliError::validation("UnknownLabel", msg).with("label", l),
            SourceError::PatternSyntax(p) => CliError::validation("PatternSyntax", msg).with("pattern_error", p.message),
            SourceError::InvalidSource { .. } => CliError::validation("InvalidSource", msg),
        }
    }
}

impl From<DenoiseError> for CliError {
    fn from(e: DenoiseError) -> Self {
        let msg = e.to_string();
        match e {
            DenoiseError::MissingLayer(l) => CliError::usage("UnknownLayer", msg).with("layer", l),
            DenoiseError::NoSources => CliError::usage("NoSources", msg),
            DenoiseError::InvalidConfig(_) => CliError::usage("InvalidConfig", msg),
            DenoiseError::NoDocuments => CliError::validation("NoDocuments", msg),
            DenoiseError::UnknownLabel(_) => CliError::validation("UnknownLabel", msg),
            DenoiseError::Overlap { .. } => CliError::validation("Overlap", msg),
            DenoiseError::Dimension(_) => CliError::validation("Dimension", msg),
            DenoiseError::InvalidParams(_) => CliError::validation("InvalidParams", msg),
            DenoiseError::DegenerateLikelihood { .. } => CliError::validation("DegenerateLikelihood", msg),
            DenoiseError::Cancelled => CliError::validation("Cancelled", msg),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let msg = e.to_string();
        match e {
            EvalError::MissingLayer(l) => CliError::usage("UnknownLayer", msg).with("layer", l),
            EvalError::InvalidConfig(_) => CliError::usage("InvalidConfig", msg),
            EvalError::Denoise(d) => d.into(),
            EvalError::InsufficientDocs { .. } => CliError::usage("InsufficientDocs", msg),
            EvalError::Overlap { .. } | EvalError::InDocument { .. } => CliError::validation("EvaluationFailed", msg),
        }
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        let msg = e.to_string();
        let remote = |code| CliError::new(Exit::Remote, code, msg.clone());
        match e {
            BridgeError::InvalidConfig(_) => CliError::usage("InvalidConfig", msg),
            BridgeError::UnknownModel(m) => CliError::usage("UnknownModel", msg).with("model", m),
            BridgeError::UnknownDocument(d) => CliError::usage("UnknownDocument", msg).with("doc", d),
            BridgeError::UnknownLayer(l) => CliError::usage("UnknownLayer", msg).with("layer", l),
            BridgeError::InvalidLayer(_) => CliError::validation("InvalidLayer", msg),
            BridgeError::Timeout { after_ms } => remote("Timeout").with("after_ms", after_ms),
            BridgeError::BadResponse { path, reason } => remote("BadResponse").with("path", path).with("reason", reason),
            BridgeError::RemoteError { status, body } => remote("RemoteError").with("status", status).with("body", body),
            BridgeError::Transport(_) => remote("Transport"),
            BridgeError::Store(_) => CliError::validation("StoreError", msg),
        }
    }
}
