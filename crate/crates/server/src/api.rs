//! Routes and handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Cursor, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::{FromRequest, FromRequestParts, Path as UrlPath, Request, State};
use axum::http::{header, request::Parts, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use weaklab::corpus::{parse_t_id, SpanAnnotation, DENOISED_LAYER, GOLD_LAYER};
use weaklab::denoiser::{denoise_corpus_with, FitConfig};
use weaklab::evaluation::{score_layers, MatchMode};
use weaklab::project_dir::LoadOptions;
use weaklab::weak_sources::{build_dictionary, ConflictPolicy, Matcher, WeakSource};

use crate::bridge::{bridge_predict, BridgeError, ModelServerConfig, ModelServerSpec};
use crate::error::ApiError;
use crate::jobs::{run_blocking, JobCtx, Jobs};
use crate::store::ProjectStore;

pub struct AppState {
    pub projects: BTreeMap<String, Arc<ProjectStore>>,
    pub jobs: Jobs,
    pub models: RwLock<BTreeMap<String, ModelServerConfig>>,
    pub client: reqwest::Client,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(projects: impl IntoIterator<Item = ProjectStore>) -> Self {
        AppState {
            projects: projects
                .into_iter()
                .map(|s| (s.name().to_string(), Arc::new(s)))
                .collect(),
            jobs: Jobs::new(),
            models: RwLock::new(BTreeMap::new()),
            client: reqwest::Client::new(),
        }
    }

    pub fn with_model(self, cfg: ModelServerConfig) -> Self {
        self.add_model(cfg);
        self
    }

    pub fn add_model(&self, cfg: ModelServerConfig) {
        self.models
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(cfg.name.clone(), cfg);
    }

    pub fn model(&self, name: &str) -> Option<ModelServerConfig> {
        self.models.read().unwrap_or_else(|e| e.into_inner()).get(name).cloned()
    }

    /// The project named by `?project=`, or the only project there is.
    pub fn project(&self, name: Option<&str>) -> Result<Arc<ProjectStore>, ApiError> {
        match name {
            Some(n) => self.projects.get(n).cloned().ok_or_else(|| ApiError::not_found("project", n)),
            None if self.projects.len() == 1 => Ok(self.projects.values().next().cloned().expect("one project")),
            None => Err(ApiError::bad_request(
                "AmbiguousProject",
                format!("{} projects are served; pass ?project=", self.projects.len()),
            )),
        }
    }

    pub fn into_shared(self) -> Shared {
        Arc::new(self)
    }
}

fn is_project_dir(dir: &Path) -> bool {
    let marker = |e: &std::fs::DirEntry| {
        let p = e.path();
        (p.is_file() && p.extension().is_some_and(|x| x == "txt"))
            || matches!(
                p.file_name().and_then(|n| n.to_str()),
                Some(weaklab::project_dir::LABELS_FILE | weaklab::project_dir::SOURCES_FILE)
            )
    };
    std::fs::read_dir(dir)
        .map(|rd| rd.flatten().any(|e| marker(&e)))
        .unwrap_or(false)
}

/// Opens the projects under `root`: `root` itself if it holds documents or
/// project files, otherwise each such subdirectory. An empty root is one
/// empty project.
pub fn open_root(root: &Path, opts: LoadOptions) -> Result<Vec<ProjectStore>, weaklab::project_dir::ProjectIoError> {
    if !root.is_dir() {
        return Err(weaklab::project_dir::ProjectIoError::NotAProject(root.to_path_buf()));
    }
    let mut subdirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|source| weaklab::project_dir::ProjectIoError::Io {
            path: root.to_path_buf(),
            source,
        })?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != weaklab::project_dir::LAYERS_DIR) && is_project_dir(p))
        .collect();
    subdirs.sort();
    if is_project_dir(root) || subdirs.is_empty() {
        return Ok(vec![ProjectStore::open(root, opts)?.0]);
    }
    subdirs
        .into_iter()
        .map(|d| ProjectStore::open(d, opts).map(|(s, _)| s))
        .collect()
}

/// JSON body extractor whose rejections use the API's error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::bad_request("BadRequestBody", e.body_text())),
        }
    }
}

/// Query extractor with the API's error shape.
pub struct Q<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Q<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        match axum::extract::Query::<T>::from_request_parts(parts, state).await {
            Ok(axum::extract::Query(v)) => Ok(Q(v)),
            Err(e) => Err(ApiError::bad_request("BadQuery", e.body_text())),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct Sel {
    project: Option<String>,
    #[serde(default)]
    background: bool,
    doc: Option<String>,
}

/// An annotation as it travels over the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpan {
    #[serde(default)]
    pub id: Option<String>,
    pub label: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub surface: Option<String>,
}

impl From<&SpanAnnotation> for ApiSpan {
    fn from(a: &SpanAnnotation) -> Self {
        ApiSpan {
            id: Some(a.id.clone()),
            label: a.label.clone(),
            start: a.start,
            end: a.end,
            surface: Some(a.surface.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub doc: String,
    pub layer: String,
    pub version: u64,
    pub annotations: Vec<ApiSpan>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PutBody {
    pub version: u64,
    pub annotations: Vec<ApiSpan>,
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/projects", get(list_projects))
        .route("/projects/{p}/docs", get(list_docs))
        .route("/docs/{d}", get(get_doc))
        .route("/docs/{d}/annotations/{layer}", get(get_annotations).put(put_annotations))
        .route("/sources", get(list_sources).post(create_source))
        .route("/sources/{s}", get(get_source).delete(delete_source))
        .route("/sources/{s}/apply", post(apply_source))
        .route("/denoise", post(denoise))
        .route("/dictionary/build", post(dictionary_build))
        .route("/dictionary/apply", post(dictionary_apply))
        .route("/evaluate", post(evaluate))
        .route("/models", get(list_models))
        .route("/model/{name}", put(put_model))
        .route("/model/{name}/predict", post(predict))
        .route("/export", get(export))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .with_state(state)
}

fn flush(store: &ProjectStore) -> Result<(), ApiError> {
    store.flush().map(|_| ()).map_err(Into::into)
}

/// Runs engine work in the foreground, or as a job with `202` when
/// `background` is set.
async fn engine<F>(state: &Shared, store: &ProjectStore, kind: &str, background: bool, body: F) -> Result<Response, ApiError>
where
    F: FnOnce(&JobCtx) -> Result<Value, ApiError> + Send + 'static,
{
    if background {
        let id = state.jobs.spawn(kind, store.name(), body);
        let status = json!({"job": id, "kind": kind, "status_url": format!("/jobs/{id}")});
        Ok((StatusCode::ACCEPTED, Json(status)).into_response())
    } else {
        Ok(Json(run_blocking(kind, body).await?).into_response())
    }
}

async fn list_projects(State(state): State<Shared>) -> Json<Vec<Value>> {
    Json(
        state
            .projects
            .values()
            .map(|s| {
                s.read(|ws| {
                    json!({
                        "name": s.name(),
                        "documents": ws.project.documents.len(),
                        "layers": ws.project.layers.keys().collect::<Vec<_>>(),
                        "labels": ws.project.labels.labels,
                        "model_labels": ws.project.labels.model_labels,
                        "sources": ws.sources.iter().map(|x| &x.id).collect::<Vec<_>>(),
                    })
                })
            })
            .collect(),
    )
}

async fn list_docs(State(state): State<Shared>, UrlPath(p): UrlPath<String>) -> Result<Json<Vec<Value>>, ApiError> {
    let store = state.project(Some(&p))?;
    Ok(Json(store.read(|ws| {
        ws.project
            .documents
            .values()
            .map(|d| {
                let layers: BTreeMap<&str, usize> = ws
                    .project
                    .layers
                    .iter()
                    .filter_map(|(name, l)| l.get(d.id()).map(|a| (name.as_str(), a.len())))
                    .collect();
                json!({"id": d.id(), "chars": d.len(), "tokens": d.tokens().len(), "layers": layers})
            })
            .collect()
    })))
}

async fn get_doc(State(state): State<Shared>, UrlPath(d): UrlPath<String>, Q(sel): Q<Sel>) -> Result<Json<Value>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    store
        .read(|ws| {
            ws.project.doc(&d).map(|doc| {
                let tokens: Vec<Value> = doc.tokens().iter().map(|t| json!({"start": t.start, "end": t.end})).collect();
                json!({"id": doc.id(), "text": doc.text(), "tokens": tokens})
            })
        })
        .map(Json)
        .ok_or_else(|| ApiError::not_found("document", &d))
}

async fn get_annotations(
    State(state): State<Shared>,
    UrlPath((d, layer)): UrlPath<(String, String)>,
    Q(sel): Q<Sel>,
) -> Result<Json<LayerDoc>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let (version, anns) = store.layer_doc(&d, &layer)?;
    Ok(Json(LayerDoc {
        doc: d,
        layer,
        version,
        annotations: anns.iter().map(ApiSpan::from).collect(),
    }))
}

/// Fills in missing surfaces from the text and missing ids with fresh
/// `T<n>` numbers.
fn to_spans(store: &ProjectStore, doc: &str, layer: &str, input: Vec<ApiSpan>) -> Result<Vec<SpanAnnotation>, ApiError> {
    store.read(|ws| {
        let d = ws.project.doc(doc).ok_or_else(|| ApiError::not_found("document", doc))?;
        let mut next = input
            .iter()
            .filter_map(|a| a.id.as_deref().and_then(parse_t_id))
            .max()
            .unwrap_or(0);
        let provenance = weaklab::corpus::Provenance::for_layer(layer);
        Ok(input
            .into_iter()
            .map(|a| {
                let id = a.id.unwrap_or_else(|| {
                    next += 1;
                    format!("T{next}")
                });
                let surface = a
                    .surface
                    .unwrap_or_else(|| d.slice(a.start, a.end).unwrap_or_default().to_string());
                SpanAnnotation {
                    id,
                    label: a.label,
                    start: a.start,
                    end: a.end,
                    surface,
                    provenance: provenance.clone(),
                }
            })
            .collect())
    })
}

async fn put_annotations(
    State(state): State<Shared>,
    UrlPath((d, layer)): UrlPath<(String, String)>,
    Q(sel): Q<Sel>,
    Body(body): Body<PutBody>,
) -> Result<Json<LayerDoc>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let spans = to_spans(&store, &d, &layer, body.annotations)?;
    let outcome = store.put_annotations(&d, &layer, body.version, spans)?;
    if outcome.changed {
        let s = store.clone();
        tokio::task::spawn_blocking(move || flush(&s))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
    }
    let (version, anns) = store.layer_doc(&d, &layer)?;
    Ok(Json(LayerDoc {
        doc: d,
        layer,
        version,
        annotations: anns.iter().map(ApiSpan::from).collect(),
    }))
}

async fn list_sources(State(state): State<Shared>, Q(sel): Q<Sel>) -> Result<Json<Vec<WeakSource>>, ApiError> {
    Ok(Json(state.project(sel.project.as_deref())?.sources()))
}

async fn get_source(State(state): State<Shared>, UrlPath(s): UrlPath<String>, Q(sel): Q<Sel>) -> Result<Json<WeakSource>, ApiError> {
    Ok(Json(state.project(sel.project.as_deref())?.source(&s)?))
}

async fn create_source(State(state): State<Shared>, Q(sel): Q<Sel>, Body(src): Body<WeakSource>) -> Result<Response, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let created = store.add_source(src.clone())?;
    if created {
        flush(&store)?;
    }
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(src)).into_response())
}

async fn delete_source(State(state): State<Shared>, UrlPath(s): UrlPath<String>, Q(sel): Q<Sel>) -> Result<StatusCode, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    store.remove_source(&s)?;
    flush(&store)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Applies source `id` to `docs` (all documents if `None`) and stores the
/// result in the layer of the same name.
fn apply_job(store: Arc<ProjectStore>, id: String, docs: Option<Vec<String>>) -> impl FnOnce(&JobCtx) -> Result<Value, ApiError> + Send + 'static {
    move |ctx| {
        let source = store.source(&id)?;
        let (labels, targets) = store.read(|ws| {
            let ids: Vec<String> = match &docs {
                Some(d) => d.clone(),
                None => ws.project.documents.keys().cloned().collect(),
            };
            let targets: Result<Vec<_>, ApiError> = ids
                .iter()
                .map(|d| ws.project.doc(d).cloned().ok_or_else(|| ApiError::not_found("document", d)))
                .collect();
            (ws.project.labels.clone(), targets)
        });
        let targets = targets?;
        let mut out = BTreeMap::new();
        for (i, doc) in targets.iter().enumerate() {
            if ctx.is_cancelled() {
                return Err(ApiError::bad_request("Cancelled", "job cancelled"));
            }
            out.insert(doc.id().to_string(), source.apply(doc, &labels)?);
            ctx.set_progress(json!({"documents_done": i + 1, "documents": targets.len()}));
        }
        let spans: usize = out.values().map(Vec::len).sum();
        let n = out.len();
        let changed = store.replace_layer(&id, out)?;
        flush(&store)?;
        Ok(json!({"source": id, "layer": id, "documents": n, "annotations": spans, "changed_documents": changed}))
    }
}

async fn apply_source(State(state): State<Shared>, UrlPath(s): UrlPath<String>, Q(sel): Q<Sel>) -> Result<Response, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    store.source(&s)?;
    let docs = match sel.doc.as_deref() {
        None | Some("all") => None,
        Some(d) => {
            store.layer_doc(d, &s)?;
            Some(vec![d.to_string()])
        }
    };
    engine(&state, &store, "apply", sel.background, apply_job(store.clone(), s, docs)).await
}

#[derive(Debug, Deserialize)]
pub struct DenoiseBody {
    pub sources: Vec<String>,
    #[serde(default)]
    pub config: FitConfig,
}

async fn denoise(State(state): State<Shared>, Q(sel): Q<Sel>, Body(body): Body<DenoiseBody>) -> Result<Response, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    body.config.check()?;
    let s = store.clone();
    engine(&state, &store, "denoise", sel.background, move |ctx| {
        let project = s.read(|ws| ws.project.clone());
        let outcome = denoise_corpus_with(&project, &body.sources, &body.config, |iteration, ll| {
            ctx.set_progress(json!({"iteration": iteration, "log_likelihood": ll}));
            if ctx.is_cancelled() {
                std::ops::ControlFlow::Break(())
            } else {
                std::ops::ControlFlow::Continue(())
            }
        })?;
        let spans: usize = outcome.layer.values().map(Vec::len).sum();
        let n = outcome.layer.len();
        let changed = s.replace_layer(DENOISED_LAYER, outcome.layer)?;
        s.set_params(outcome.params);
        flush(&s)?;
        Ok(json!({
            "layer": DENOISED_LAYER,
            "sources": body.sources,
            "documents": n,
            "annotations": spans,
            "changed_documents": changed,
            "iterations": outcome.trace.len().saturating_sub(1),
            "converged": outcome.converged,
            "trace": outcome.trace,
        }))
    })
    .await
}

fn default_gold() -> String {
    GOLD_LAYER.to_string()
}

fn default_dictionary() -> String {
    "dictionary".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct DictionaryBuildBody {
    #[serde(default = "default_gold")]
    pub gold_layer: String,
    /// Annotated documents to harvest; defaults to every document with an
    /// entry in the gold layer.
    #[serde(default)]
    pub docs: Option<Vec<String>>,
    #[serde(default)]
    pub policy: ConflictPolicy,
    #[serde(default = "default_dictionary")]
    pub source: String,
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
}

async fn dictionary_build(State(state): State<Shared>, Q(sel): Q<Sel>, Body(body): Body<DictionaryBuildBody>) -> Result<Json<Value>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let dict = store.read(|ws| {
        let gold = ws
            .project
            .layer(&body.gold_layer)
            .ok_or_else(|| ApiError::not_found("layer", &body.gold_layer))?;
        let docs: Vec<&str> = match &body.docs {
            Some(d) => {
                if let Some(bad) = d.iter().find(|d| ws.project.doc(d).is_none()) {
                    return Err(ApiError::not_found("document", bad));
                }
                d.iter().map(String::as_str).collect()
            }
            None => gold.keys().map(String::as_str).collect(),
        };
        let mut dict = build_dictionary(gold, &docs, body.policy);
        dict.case_sensitive = body.case_sensitive;
        Ok((dict, docs.len()))
    });
    let (dict, n_docs) = dict?;
    let entries = dict.entries.len();
    store.upsert_source(WeakSource::new(body.source.clone(), Matcher::Dictionary(dict)))?;
    flush(&store)?;
    Ok(Json(json!({"source": body.source, "entries": entries, "documents": n_docs})))
}

#[derive(Debug, Deserialize)]
pub struct DictionaryApplyBody {
    #[serde(default = "default_dictionary")]
    pub source: String,
    #[serde(default)]
    pub docs: Option<Vec<String>>,
}

async fn dictionary_apply(State(state): State<Shared>, Q(sel): Q<Sel>, Body(body): Body<DictionaryApplyBody>) -> Result<Response, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let src = store.source(&body.source)?;
    if !matches!(src.matcher, Matcher::Dictionary(_)) {
        return Err(ApiError::bad_request("NotADictionary", format!("source {:?} is not a dictionary", body.source)));
    }
    engine(&state, &store, "apply", sel.background, apply_job(store.clone(), body.source, body.docs)).await
}

#[derive(Debug, Deserialize)]
pub struct EvaluateBody {
    pub pred: String,
    #[serde(default = "default_gold")]
    pub gold: String,
    #[serde(default)]
    pub mode: Option<MatchMode>,
}

async fn evaluate(State(state): State<Shared>, Q(sel): Q<Sel>, Body(body): Body<EvaluateBody>) -> Result<Json<Value>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let mode = body.mode.unwrap_or(MatchMode::ExactSpan);
    let scores = store.read(|ws| score_layers(&ws.project, &body.pred, &body.gold, mode))?;
    let mut out = serde_json::to_value(&scores).map_err(|e| ApiError::internal(e.to_string()))?;
    out["scores"] = serde_json::to_value(scores.micro.scores()).unwrap_or_default();
    Ok(Json(out))
}

async fn list_models(State(state): State<Shared>) -> Json<BTreeMap<String, Value>> {
    let models = state.models.read().unwrap_or_else(|e| e.into_inner());
    Json(
        models
            .iter()
            .map(|(n, c)| (n.clone(), json!({"url": c.url.as_str(), "timeout_ms": c.timeout.as_millis() as u64})))
            .collect(),
    )
}

async fn put_model(State(state): State<Shared>, UrlPath(name): UrlPath<String>, Body(spec): Body<ModelServerSpec>) -> Result<Json<Value>, ApiError> {
    let cfg = ModelServerConfig::from_spec(name.clone(), &spec)?;
    let out = json!({"name": name, "url": cfg.url.as_str(), "timeout_ms": cfg.timeout.as_millis() as u64});
    state.add_model(cfg);
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
pub struct PredictBody {
    /// Documents to send; all when absent.
    #[serde(default)]
    pub docs: Option<Vec<String>>,
    /// Layers sent as weak annotations; the source layers when absent.
    #[serde(default)]
    pub layers: Option<Vec<String>>,
}

async fn predict(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    Q(sel): Q<Sel>,
    Body(body): Body<PredictBody>,
) -> Result<Json<Value>, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let cfg = state.model(&name).ok_or(BridgeError::UnknownModel(name))?;
    let (docs, layers) = store.read(|ws| {
        let docs = body.docs.clone().unwrap_or_else(|| ws.project.documents.keys().cloned().collect());
        let layers = body.layers.clone().unwrap_or_else(|| {
            ws.sources
                .iter()
                .map(|s| s.id.clone())
                .filter(|id| ws.project.layer(id).is_some())
                .collect()
        });
        (docs, layers)
    });
    let outcome = bridge_predict(&state.client, &cfg, &store, &docs, &layers).await?;
    let s = store.clone();
    tokio::task::spawn_blocking(move || flush(&s))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let annotations: BTreeMap<&String, Vec<ApiSpan>> = outcome
        .annotations
        .iter()
        .map(|(d, a)| (d, a.iter().map(ApiSpan::from).collect()))
        .collect();
    Ok(Json(json!({
        "layer": outcome.layer,
        "documents": outcome.annotations.len(),
        "changed_documents": outcome.changed_documents,
        "new_labels": outcome.new_labels,
        "annotations": annotations,
    })))
}

/// Zip of every layer as `.ann` files, laid out like the project directory.
pub fn export_zip(store: &ProjectStore) -> Result<Vec<u8>, ApiError> {
    let files: Vec<(String, String)> = store.read(|ws| {
        let mut files = Vec::new();
        for (layer, docs) in &ws.project.layers {
            for (doc, anns) in docs {
                let path = if layer == GOLD_LAYER {
                    format!("{doc}.ann")
                } else {
                    format!("{}/{layer}/{doc}.ann", weaklab::project_dir::LAYERS_DIR)
                };
                files.push((path, weaklab::corpus::serialize_ann(anns)));
            }
        }
        files
    });
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    let io = |e: &dyn std::fmt::Display| ApiError::internal(format!("zip: {e}"));
    let mut seen = BTreeSet::new();
    for (path, body) in files {
        if !seen.insert(path.clone()) {
            continue;
        }
        zip.start_file(path, opts).map_err(|e| io(&e))?;
        zip.write_all(body.as_bytes()).map_err(|e| io(&e))?;
    }
    Ok(zip.finish().map_err(|e| io(&e))?.into_inner())
}

async fn export(State(state): State<Shared>, Q(sel): Q<Sel>) -> Result<Response, ApiError> {
    let store = state.project(sel.project.as_deref())?;
    let bytes = export_zip(&store)?;
    let disposition = format!("attachment; filename=\"{}.zip\"", store.name().replace('"', ""));
    Ok((
        [(header::CONTENT_TYPE, "application/zip".to_string()), (header::CONTENT_DISPOSITION, disposition)],
        bytes,
    )
        .into_response())
}

fn job_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse().map_err(|_| ApiError::not_found("job", raw))
}

async fn get_job(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let status = state.jobs.get(job_id(&id)?).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(serde_json::to_value(status).unwrap_or_default()))
}

async fn cancel_job(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let status = state.jobs.cancel(job_id(&id)?).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(serde_json::to_value(status).unwrap_or_default()))
}
