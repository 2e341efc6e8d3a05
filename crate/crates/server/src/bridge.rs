//! Client side of the model-server protocol.
//!
//! Request:
//! `{"documents":[{"id","text","tokens":[{"start","end"}],"weak_annotations":[[tag|null, ...], ...]}],"label_set":[...]}`
//! where `weak_annotations[t][j]` is source `j`'s BIO tag at token `t` and
//! `null` is an abstention.
//!
//! Response: `{"predictions":[{"id","annotations":[{"label","start","end"}]}]}`
//! with char offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use weaklab::corpus::{Project, Provenance, SpanAnnotation, MODEL_LAYER_PREFIX};
use weaklab::denoiser::TagSpace;
use weaklab::weak_sources::build_vote_grid;

use crate::store::{ProjectStore, StoreError};

/// Environment variable holding the URL of the default model server.
pub const MODEL_URL_ENV: &str = "WEAKLAB_MODEL_URL";
pub const DEFAULT_MODEL_NAME: &str = "default";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
const MAX_ERROR_BODY: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("invalid model server config: {0}")]
    InvalidConfig(String),
    #[error("no model server named {0:?}")]
    UnknownModel(String),
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("layer cannot be encoded: {0}")]
    InvalidLayer(String),
    #[error("model server did not answer within {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("bad response at {path}: {reason}")]
    BadResponse { path: String, reason: String },
    #[error("model server returned {status}")]
    RemoteError { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelServerConfig {
    pub name: String,
    pub url: Url,
    pub timeout: Duration,
    /// Sent verbatim as the `Authorization` header.
    pub auth_header: Option<String>,
}

/// JSON form of a [`ModelServerConfig`], as registered over HTTP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelServerSpec {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_header: Option<String>,
}

impl ModelServerConfig {
    pub fn new(name: impl Into<String>, url: &str) -> Result<Self, BridgeError> {
        let name = name.into();
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(BridgeError::InvalidConfig(format!("bad name {name:?}")));
        }
        let url = Url::parse(url).map_err(|e| BridgeError::InvalidConfig(format!("{url:?}: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
            return Err(BridgeError::InvalidConfig(format!("{url} is not an http(s) URL")));
        }
        Ok(ModelServerConfig {
            name,
            url,
            timeout: DEFAULT_TIMEOUT,
            auth_header: None,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_auth(mut self, header: impl Into<String>) -> Self {
        self.auth_header = Some(header.into());
        self
    }

    pub fn from_spec(name: impl Into<String>, spec: &ModelServerSpec) -> Result<Self, BridgeError> {
        let mut cfg = Self::new(name, &spec.url)?;
        if let Some(ms) = spec.timeout_ms {
            if ms == 0 {
                return Err(BridgeError::InvalidConfig("timeout_ms must be positive".into()));
            }
            cfg.timeout = Duration::from_millis(ms);
        }
        cfg.auth_header = spec.auth_header.clone();
        Ok(cfg)
    }

    pub fn spec(&self) -> ModelServerSpec {
        ModelServerSpec {
            url: self.url.to_string(),
            timeout_ms: Some(self.timeout.as_millis() as u64),
            auth_header: self.auth_header.clone(),
        }
    }

    /// The `default` config from `WEAKLAB_MODEL_URL`, if set.
    pub fn from_env() -> Option<Result<Self, BridgeError>> {
        let url = std::env::var(MODEL_URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        Some(Self::new(DEFAULT_MODEL_NAME, url.trim()))
    }

    /// The layer predictions are stored in.
    pub fn layer(&self) -> String {
        format!("{MODEL_LAYER_PREFIX}{}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireToken {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireDocument {
    pub id: String,
    pub text: String,
    pub tokens: Vec<WireToken>,
    pub weak_annotations: Vec<Vec<Option<String>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub documents: Vec<WireDocument>,
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAnnotation {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub id: String,
    pub annotations: Vec<WireAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<WirePrediction>,
}

/// What a successful prediction stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictOutcome {
    pub layer: String,
    pub annotations: BTreeMap<String, Vec<SpanAnnotation>>,
    pub changed_documents: usize,
    /// Labels first seen in this response, now flagged as model labels.
    pub new_labels: Vec<String>,
}

/// Builds the request for `docs`, with one weak-annotation column per entry
/// of `layers`.
pub fn build_request(project: &Project, docs: &[String], layers: &[String]) -> Result<PredictRequest, BridgeError> {
    if let Some(l) = layers.iter().find(|l| project.layer(l).is_none()) {
        return Err(BridgeError::UnknownLayer(l.clone()));
    }
    let tags = TagSpace::new(project.labels.iter());
    let mut documents = Vec::with_capacity(docs.len());
    for id in docs {
        let doc = project.doc(id).ok_or_else(|| BridgeError::UnknownDocument(id.clone()))?;
        let per_source: Vec<(&str, &[SpanAnnotation])> =
            layers.iter().map(|l| (l.as_str(), project.annotations(id, l))).collect();
        let grid = build_vote_grid(doc, &tags, &per_source).map_err(|e| BridgeError::InvalidLayer(e.to_string()))?;
        let weak_annotations = (0..doc.tokens().len())
            .map(|t| grid.row(t).iter().map(|o| o.map(|tag| tags.name(tag))).collect())
            .collect();
        documents.push(WireDocument {
            id: id.clone(),
            text: doc.text().to_string(),
            tokens: doc
                .tokens()
                .iter()
                .map(|t| WireToken {
                    start: t.start,
                    end: t.end,
                })
                .collect(),
            weak_annotations,
        });
    }
    Ok(PredictRequest {
        documents,
        label_set: project.labels.iter().map(str::to_string).collect(),
    })
}

fn bad(path: impl Into<String>, reason: impl Into<String>) -> BridgeError {
    BridgeError::BadResponse {
        path: path.into(),
        reason: reason.into(),
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, BridgeError> {
    obj.get(key).ok_or_else(|| bad(path, format!("missing field {key:?}")))
}

fn offset(v: &Value, path: &str) -> Result<usize, BridgeError> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| bad(path, format!("expected a non-negative integer, got {v}")))
}

/// Checks a response body against the request it answers and converts it
/// to annotations. Every requested document must appear exactly once.
/// Errors carry a JSON path such as `$.predictions[0].annotations[2].end`.
pub fn parse_response(body: &[u8], request: &PredictRequest) -> Result<BTreeMap<String, Vec<WireAnnotation>>, BridgeError> {
    let root: Value = serde_json::from_slice(body).map_err(|e| bad("$", format!("not JSON: {e}")))?;
    let obj = root.as_object().ok_or_else(|| bad("$", "expected an object"))?;
    let preds = field(obj, "$", "predictions")?
        .as_array()
        .ok_or_else(|| bad("$.predictions", "expected an array"))?;
    let lengths: BTreeMap<&str, usize> = request
        .documents
        .iter()
        .map(|d| (d.id.as_str(), d.text.chars().count()))
        .collect();

    let mut out = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        let path = format!("$.predictions[{i}]");
        let p = p.as_object().ok_or_else(|| bad(&path, "expected an object"))?;
        let id_path = format!("{path}.id");
        let id = field(p, &path, "id")?
            .as_str()
            .ok_or_else(|| bad(&id_path, "expected a string"))?;
        let Some(&len) = lengths.get(id) else {
            return Err(bad(id_path, format!("document {id:?} was not requested")));
        };
        if out.contains_key(id) {
            return Err(bad(id_path, format!("document {id:?} appears twice")));
        }
        let anns_path = format!("{path}.annotations");
        let anns = field(p, &path, "annotations")?
            .as_array()
            .ok_or_else(|| bad(&anns_path, "expected an array"))?;
        let mut spans = Vec::with_capacity(anns.len());
        for (k, a) in anns.iter().enumerate() {
            let ap = format!("{anns_path}[{k}]");
            let a = a.as_object().ok_or_else(|| bad(&ap, "expected an object"))?;
            let label = field(a, &ap, "label")?
                .as_str()
                .ok_or_else(|| bad(format!("{ap}.label"), "expected a string"))?;
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(bad(format!("{ap}.label"), format!("invalid label {label:?}")));
            }
            let start = offset(field(a, &ap, "start")?, &format!("{ap}.start"))?;
            let end = offset(field(a, &ap, "end")?, &format!("{ap}.end"))?;
            if start >= end {
                return Err(bad(&ap, format!("empty or reversed span {start}..{end}")));
            }
            if end > len {
                return Err(bad(format!("{ap}.end"), format!("offset {end} is past the document end {len}")));
            }
            spans.push(WireAnnotation {
                label: label.to_string(),
                start,
                end,
            });
        }
        out.insert(id.to_string(), spans);
    }
    if let Some(missing) = lengths.keys().find(|id| !out.contains_key(**id)) {
        return Err(bad("$.predictions", format!("no prediction for document {missing:?}")));
    }
    Ok(out)
}

/// Converts validated wire annotations to layer annotations, numbered in
/// offset order.
pub fn to_annotations(project: &Project, layer: &str, wire: &BTreeMap<String, Vec<WireAnnotation>>) -> BTreeMap<String, Vec<SpanAnnotation>> {
    let provenance = Provenance::for_layer(layer);
    wire.iter()
        .filter_map(|(id, anns)| {
            let doc = project.doc(id)?;
            let mut sorted = anns.clone();
            sorted.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
            sorted.dedup();
            let spans = sorted
                .iter()
                .enumerate()
                .filter_map(|(i, a)| SpanAnnotation::from_doc(doc, format!("T{}", i + 1), &a.label, a.start, a.end, provenance.clone()))
                .collect();
            Some((id.clone(), spans))
        })
        .collect()
}

/// Sends `request` and returns the raw response body of a 2xx answer.
pub async fn send(client: &reqwest::Client, cfg: &ModelServerConfig, request: &PredictRequest) -> Result<Vec<u8>, BridgeError> {
    let timeout_err = || BridgeError::Timeout {
        after_ms: cfg.timeout.as_millis() as u64,
    };
    let classify = |e: reqwest::Error| {
        if e.is_timeout() {
            timeout_err()
        } else {
            BridgeError::Transport(e.to_string())
        }
    };
    let mut req = client.post(cfg.url.clone()).timeout(cfg.timeout).json(request);
    if let Some(h) = &cfg.auth_header {
        req = req.header(reqwest::header::AUTHORIZATION, h);
    }
    // the client timeout covers connect and headers; the outer one also
    // bounds reading the body
    let fut = async {
        let resp = req.send().await.map_err(classify)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(classify)?;
        Ok::<_, BridgeError>((status, body))
    };
    let (status, body) = tokio::time::timeout(cfg.timeout, fut).await.map_err(|_| timeout_err())??;
    if !status.is_success() {
        let mut text = String::from_utf8_lossy(&body).into_owned();
        if text.len() > MAX_ERROR_BODY {
            let mut cut = MAX_ERROR_BODY;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            text.truncate(cut);
        }
        return Err(BridgeError::RemoteError {
            status: status.as_u16(),
            body: text,
        });
    }
    Ok(body.to_vec())
}

/// Asks the model server for predictions on `docs` and stores them in layer
/// `model:{name}`. The project lock is not held while waiting for the
/// server, and nothing is written unless the whole response is valid.
pub async fn bridge_predict(
    client: &reqwest::Client,
    cfg: &ModelServerConfig,
    store: &ProjectStore,
    docs: &[String],
    layers: &[String],
) -> Result<PredictOutcome, BridgeError> {
    let request = store.read(|ws| build_request(&ws.project, docs, layers))?;
    let body = send(client, cfg, &request).await?;
    let wire = parse_response(&body, &request)?;
    let layer = cfg.layer();
    let labels: Vec<String> = wire
        .values()
        .flatten()
        .map(|a| a.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let annotations = store.read(|ws| to_annotations(&ws.project, &layer, &wire));
    let (changed_documents, new_labels) = store.commit_layer(&layer, &labels, annotations.clone())?;
    Ok(PredictOutcome {
        layer,
        annotations,
        changed_documents,
        new_labels,
    })
}
