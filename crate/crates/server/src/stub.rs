//! A local model server for tests and demos.
//!
//! ```no_run
//! # async fn demo() -> std::io::Result<()> {
//! use weaklab_server::stub::{start_stub, StubBehavior};
//! let stub = start_stub(StubBehavior::Echo { column: 0 }).await?;
//! println!("POST {}", stub.url);
//! # Ok(()) }
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::Value;

use crate::bridge::{ModelServerConfig, PredictRequest, PredictResponse, WireAnnotation, WireDocument, WirePrediction};

#[derive(Debug, Clone)]
pub enum StubBehavior {
    /// Returns the spans encoded in weak-annotation column `column`.
    Echo { column: usize },
    /// Returns `table[id]` for each requested document (empty if absent).
    Table(BTreeMap<String, Vec<WireAnnotation>>),
    /// Answers every request with this body.
    Fixed(Value),
    /// Answers with this status and body.
    Status(u16, String),
    /// Waits, then behaves like the inner behavior.
    Delay(Duration, Box<StubBehavior>),
}

/// Decodes one column of a wire document's BIO tags back into spans.
/// `I-x` continues an open `x` span and otherwise starts one.
pub fn decode_column(doc: &WireDocument, column: usize) -> Vec<WireAnnotation> {
    let mut out: Vec<WireAnnotation> = Vec::new();
    let mut open = false;
    for (t, row) in doc.weak_annotations.iter().enumerate() {
        let tok = &doc.tokens[t];
        let tag = row.get(column).cloned().flatten();
        let parsed = tag.as_deref().and_then(|s| {
            s.strip_prefix("B-")
                .map(|l| (true, l))
                .or_else(|| s.strip_prefix("I-").map(|l| (false, l)))
        });
        match parsed {
            Some((false, label)) if open && out.last().is_some_and(|a| a.label == label) => {
                out.last_mut().expect("open span").end = tok.end;
            }
            Some((_, label)) => {
                out.push(WireAnnotation {
                    label: label.to_string(),
                    start: tok.start,
                    end: tok.end,
                });
                open = true;
            }
            None => open = false,
        }
    }
    out
}

pub fn echo_response(req: &PredictRequest, column: usize) -> PredictResponse {
    PredictResponse {
        predictions: req
            .documents
            .iter()
            .map(|d| WirePrediction {
                id: d.id.clone(),
                annotations: decode_column(d, column),
            })
            .collect(),
    }
}

#[derive(Clone)]
struct StubState {
    behavior: StubBehavior,
    requests: Arc<Mutex<Vec<Bytes>>>,
}

fn answer(behavior: &StubBehavior, body: &Bytes) -> Response {
    let parse = || serde_json::from_slice::<PredictRequest>(body);
    match behavior {
        StubBehavior::Echo { column } => match parse() {
            Ok(req) => axum::Json(echo_response(&req, *column)).into_response(),
            Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
        },
        StubBehavior::Table(table) => match parse() {
            Ok(req) => axum::Json(PredictResponse {
                predictions: req
                    .documents
                    .iter()
                    .map(|d| WirePrediction {
                        id: d.id.clone(),
                        annotations: table.get(&d.id).cloned().unwrap_or_default(),
                    })
                    .collect(),
            })
            .into_response(),
            Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
        },
        StubBehavior::Fixed(v) => axum::Json(v.clone()).into_response(),
        StubBehavior::Status(code, text) => (
            StatusCode::from_u16(*code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            text.clone(),
        )
            .into_response(),
        StubBehavior::Delay(..) => unreachable!("delays are unwrapped by the handler"),
    }
}

async fn handle(State(state): State<StubState>, body: Bytes) -> Response {
    state.requests.lock().unwrap_or_else(|e| e.into_inner()).push(body.clone());
    let mut behavior = &state.behavior;
    while let StubBehavior::Delay(d, inner) = behavior {
        tokio::time::sleep(*d).await;
        behavior = inner;
    }
    answer(behavior, &body)
}

/// A running stub; stops when dropped.
pub struct StubServer {
    pub addr: SocketAddr,
    pub url: String,
    requests: Arc<Mutex<Vec<Bytes>>>,
    task: tokio::task::JoinHandle<()>,
}

impl StubServer {
    /// Raw bodies of the requests received so far.
    pub fn raw_requests(&self) -> Vec<Vec<u8>> {
        let r = self.requests.lock().unwrap_or_else(|e| e.into_inner());
        r.iter().map(|b| b.to_vec()).collect()
    }

    pub fn config(&self, name: &str) -> ModelServerConfig {
        ModelServerConfig::new(name, &self.url).expect("stub URL is valid")
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Starts a stub on an ephemeral localhost port answering `POST /predict`.
pub async fn start_stub(behavior: StubBehavior) -> std::io::Result<StubServer> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let requests = Arc::new(Mutex::new(Vec::new()));
    let app = Router::new().route("/predict", post(handle)).with_state(StubState {
        behavior,
        requests: requests.clone(),
    });
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(StubServer {
        addr,
        url: format!("http://{addr}/predict"),
        requests,
        task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::WireToken;

    #[test]
    fn decode_column_joins_inside_tags() {
        let tok = |s, e| WireToken { start: s, end: e };
        let some = |s: &str| Some(s.to_string());
        let doc = WireDocument {
            id: "d".into(),
            text: "a b c d e".into(),
            tokens: vec![tok(0, 1), tok(2, 3), tok(4, 5), tok(6, 7), tok(8, 9)],
            weak_annotations: vec![
                vec![some("B-X")],
                vec![some("I-X")],
                vec![None],
                vec![some("I-Y")],
                vec![some("B-X")],
            ],
        };
        let spans: Vec<_> = decode_column(&doc, 0).into_iter().map(|a| (a.label, a.start, a.end)).collect();
        assert_eq!(spans, vec![("X".into(), 0, 3), ("Y".into(), 6, 7), ("X".into(), 8, 9)]);
        assert!(decode_column(&doc, 1).is_empty());
    }
}
