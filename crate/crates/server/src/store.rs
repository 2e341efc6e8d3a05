//! In-memory project state backed by a project directory.
//!
//! Reads and writes go through one `RwLock`. Every change marks the items it
//! touched as dirty; [`ProjectStore::flush`] writes them out with atomic
//! renames and clears only the items that did not change again meanwhile.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::Serialize;
use thiserror::Error;

use weaklab::corpus::{validate, Document, LabelSet, Project, Provenance, SpanAnnotation, Violation};
use weaklab::denoiser::HmmParams;
use weaklab::project_dir::{self, LoadOptions, LoadReport, ProjectIoError, Workspace};
use weaklab::weak_sources::{SourceError, WeakSource};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("{} validation failure(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("version {given} is stale (current {current})")]
    Conflict { current: u64, given: u64 },
    #[error("source {0:?} already exists with a different definition")]
    SourceExists(String),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("{0}")]
    Io(String),
}

/// Something that differs between memory and disk.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirtyItem {
    Text { doc: String },
    Layer { layer: String, doc: String },
    Labels,
    Sources,
    Params,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlushReport {
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedWrite {
    pub path: PathBuf,
    pub error: String,
}

/// A flush that wrote some files and failed on others. Failed items stay
/// dirty.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("flush wrote {} file(s) and failed on {}", .written.len(), .failed.len())]
pub struct FlushError {
    pub written: Vec<PathBuf>,
    pub failed: Vec<FailedWrite>,
}

/// Result of a versioned write to one document's layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PutOutcome {
    pub version: u64,
    pub changed: bool,
}

struct State {
    ws: Workspace,
    versions: HashMap<(String, String), u64>,
    /// Item -> clock value of its latest change.
    dirty: BTreeMap<DirtyItem, u64>,
    clock: u64,
}

impl State {
    fn touch(&mut self, item: DirtyItem) {
        self.clock += 1;
        self.dirty.insert(item, self.clock);
    }

    fn version(&self, doc: &str, layer: &str) -> u64 {
        self.versions
            .get(&(doc.to_string(), layer.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Stores `anns` if they differ from what is there; returns the version
    /// afterwards and whether anything changed.
    fn set(&mut self, doc: &str, layer: &str, anns: Vec<SpanAnnotation>) -> PutOutcome {
        let current = self.version(doc, layer);
        let exists = self.ws.project.layer(layer).is_some_and(|l| l.contains_key(doc));
        if exists && self.ws.project.annotations(doc, layer) == anns.as_slice() {
            return PutOutcome {
                version: current,
                changed: false,
            };
        }
        self.ws.project.set_annotations(doc, layer, anns);
        self.versions.insert((doc.to_string(), layer.to_string()), current + 1);
        self.touch(DirtyItem::Layer {
            layer: layer.to_string(),
            doc: doc.to_string(),
        });
        PutOutcome {
            version: current + 1,
            changed: true,
        }
    }
}

enum Payload {
    Text(Document),
    Layer(String, String, Vec<SpanAnnotation>),
    Labels(LabelSet),
    Sources(Vec<WeakSource>),
    Params(Option<HmmParams>),
}

pub struct ProjectStore {
    root: PathBuf,
    name: String,
    state: RwLock<State>,
    flush_lock: Mutex<()>,
}

impl std::fmt::Debug for ProjectStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectStore")
            .field("root", &self.root)
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

fn with_provenance(layer: &str, mut anns: Vec<SpanAnnotation>) -> Vec<SpanAnnotation> {
    let p = Provenance::for_layer(layer);
    for a in &mut anns {
        a.provenance = p.clone();
    }
    anns
}

impl ProjectStore {
    /// Loads the project stored under `root`.
    pub fn open(root: impl Into<PathBuf>, opts: LoadOptions) -> Result<(Self, LoadReport), ProjectIoError> {
        let root = root.into();
        let (ws, report) = project_dir::load(&root, opts)?;
        Ok((Self::with_state(root, ws, false), report))
    }

    /// Wraps a workspace that is not on disk yet; everything starts dirty.
    pub fn create(root: impl Into<PathBuf>, ws: Workspace) -> Self {
        Self::with_state(root.into(), ws, true)
    }

    fn with_state(root: PathBuf, ws: Workspace, all_dirty: bool) -> Self {
        let name = ws.project.name.clone();
        let mut state = State {
            ws,
            versions: HashMap::new(),
            dirty: BTreeMap::new(),
            clock: 0,
        };
        if all_dirty {
            let docs: Vec<String> = state.ws.project.documents.keys().cloned().collect();
            let layers: Vec<(String, String)> = state
                .ws
                .project
                .layers
                .iter()
                .flat_map(|(l, docs)| docs.keys().map(move |d| (l.clone(), d.clone())))
                .collect();
            for doc in docs {
                state.touch(DirtyItem::Text { doc });
            }
            for (layer, doc) in layers {
                state.touch(DirtyItem::Layer { layer, doc });
            }
            state.touch(DirtyItem::Labels);
            state.touch(DirtyItem::Sources);
            if state.ws.params.is_some() {
                state.touch(DirtyItem::Params);
            }
        }
        ProjectStore {
            root,
            name,
            state: RwLock::new(state),
            flush_lock: Mutex::new(()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read_state(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` under the read lock.
    pub fn read<R>(&self, f: impl FnOnce(&Workspace) -> R) -> R {
        f(&self.read_state().ws)
    }

    pub fn snapshot(&self) -> Workspace {
        self.read(Workspace::clone)
    }

    pub fn version(&self, doc: &str, layer: &str) -> u64 {
        self.read_state().version(doc, layer)
    }

    /// The annotations of `doc` in `layer` with their version.
    pub fn layer_doc(&self, doc: &str, layer: &str) -> Result<(u64, Vec<SpanAnnotation>), StoreError> {
        let s = self.read_state();
        if s.ws.project.doc(doc).is_none() {
            return Err(StoreError::UnknownDocument(doc.to_string()));
        }
        Ok((s.version(doc, layer), s.ws.project.annotations(doc, layer).to_vec()))
    }

    /// Replaces `doc`'s annotations in `layer` if `expected` is the current
    /// version. A write identical to the stored content succeeds without a
    /// version bump, whatever version it carries, so replays are harmless.
    pub fn put_annotations(
        &self,
        doc: &str,
        layer: &str,
        expected: u64,
        anns: Vec<SpanAnnotation>,
    ) -> Result<PutOutcome, StoreError> {
        project_dir::check_name(layer).map_err(|e| StoreError::Io(e.to_string()))?;
        let anns = with_provenance(layer, anns);
        let mut s = self.write_state();
        let Some(document) = s.ws.project.doc(doc) else {
            return Err(StoreError::UnknownDocument(doc.to_string()));
        };
        let mut probe = Project::new(s.ws.project.name.clone(), s.ws.project.labels.clone());
        probe.add_document(document.clone());
        probe.set_annotations(doc, layer, anns.clone());
        let violations = validate(&probe);
        if !violations.is_empty() {
            return Err(StoreError::Invalid(violations));
        }
        let current = s.version(doc, layer);
        let exists = s.ws.project.layer(layer).is_some_and(|l| l.contains_key(doc));
        let same = exists && s.ws.project.annotations(doc, layer) == anns.as_slice();
        if same {
            return Ok(PutOutcome {
                version: current,
                changed: false,
            });
        }
        if expected != current {
            return Err(StoreError::Conflict {
                current,
                given: expected,
            });
        }
        Ok(s.set(doc, layer, anns))
    }

    /// Replaces the given documents' annotations in `layer`, unversioned.
    /// Nothing is written if any document is unknown. Returns the number of
    /// documents whose content changed.
    pub fn replace_layer(&self, layer: &str, docs: BTreeMap<String, Vec<SpanAnnotation>>) -> Result<usize, StoreError> {
        self.commit_layer(layer, &[], docs).map(|(changed, _)| changed)
    }

    /// Adds `labels` (flagged as model labels when new) and replaces the
    /// documents' annotations in `layer` in one critical section. Returns
    /// the changed-document count and the labels that were new.
    pub fn commit_layer(
        &self,
        layer: &str,
        labels: &[String],
        docs: BTreeMap<String, Vec<SpanAnnotation>>,
    ) -> Result<(usize, Vec<String>), StoreError> {
        project_dir::check_name(layer).map_err(|e| StoreError::Io(e.to_string()))?;
        let mut s = self.write_state();
        if let Some(d) = docs.keys().find(|d| s.ws.project.doc(d).is_none()) {
            return Err(StoreError::UnknownDocument(d.clone()));
        }
        let mut label_set = s.ws.project.labels.clone();
        let new_labels: Vec<String> = labels.iter().filter(|l| label_set.insert_from_model(l)).cloned().collect();
        let docs: BTreeMap<_, _> = docs.into_iter().map(|(d, a)| (d, with_provenance(layer, a))).collect();
        let mut probe = Project::new(s.ws.project.name.clone(), label_set.clone());
        for (doc, anns) in &docs {
            probe.add_document(s.ws.project.doc(doc).expect("checked above").clone());
            probe.set_annotations(doc, layer, anns.clone());
        }
        let violations = validate(&probe);
        if !violations.is_empty() {
            return Err(StoreError::Invalid(violations));
        }
        s.ws.project.labels = label_set;
        if !new_labels.is_empty() {
            s.touch(DirtyItem::Labels);
        }
        let mut changed = 0;
        for (doc, anns) in docs {
            changed += s.set(&doc, layer, anns).changed as usize;
        }
        Ok((changed, new_labels))
    }

    pub fn sources(&self) -> Vec<WeakSource> {
        self.read(|ws| ws.sources.clone())
    }

    pub fn source(&self, id: &str) -> Result<WeakSource, StoreError> {
        self.read(|ws| ws.sources.iter().find(|s| s.id == id).cloned())
            .ok_or_else(|| StoreError::UnknownSource(id.to_string()))
    }

    /// Registers a new source. Returns false if an identical one exists.
    pub fn add_source(&self, src: WeakSource) -> Result<bool, StoreError> {
        let mut s = self.write_state();
        src.validate(&s.ws.project.labels)?;
        match s.ws.sources.iter().find(|x| x.id == src.id) {
            Some(existing) if *existing == src => return Ok(false),
            Some(_) => return Err(StoreError::SourceExists(src.id)),
            None => {}
        }
        s.ws.sources.push(src);
        s.touch(DirtyItem::Sources);
        Ok(true)
    }

    /// Adds or replaces a source.
    pub fn upsert_source(&self, src: WeakSource) -> Result<(), StoreError> {
        let mut s = self.write_state();
        src.validate(&s.ws.project.labels)?;
        match s.ws.sources.iter_mut().find(|x| x.id == src.id) {
            Some(existing) if *existing == src => return Ok(()),
            Some(existing) => *existing = src,
            None => s.ws.sources.push(src),
        }
        s.touch(DirtyItem::Sources);
        Ok(())
    }

    pub fn remove_source(&self, id: &str) -> Result<WeakSource, StoreError> {
        let mut s = self.write_state();
        let Some(i) = s.ws.sources.iter().position(|x| x.id == id) else {
            return Err(StoreError::UnknownSource(id.to_string()));
        };
        let removed = s.ws.sources.remove(i);
        s.touch(DirtyItem::Sources);
        Ok(removed)
    }

    pub fn set_params(&self, params: HmmParams) {
        let mut s = self.write_state();
        if s.ws.params.as_ref() != Some(&params) {
            s.ws.params = Some(params);
            s.touch(DirtyItem::Params);
        }
    }

    pub fn dirty(&self) -> Vec<DirtyItem> {
        self.read_state().dirty.keys().cloned().collect()
    }

    /// Writes every dirty item to disk. Concurrent calls run one after the
    /// other.
    pub fn flush(&self) -> Result<FlushReport, FlushError> {
        let _guard = self.flush_lock.lock().unwrap_or_else(|e| e.into_inner());
        let pending: Vec<(DirtyItem, u64, Payload)> = {
            let s = self.read_state();
            let p = &s.ws.project;
            s.dirty
                .iter()
                .map(|(item, &stamp)| {
                    let payload = match item {
                        DirtyItem::Text { doc } => match p.doc(doc) {
                            Some(d) => Payload::Text(d.clone()),
                            None => Payload::Text(Document::new(doc.clone(), "")),
                        },
                        DirtyItem::Layer { layer, doc } => {
                            Payload::Layer(layer.clone(), doc.clone(), p.annotations(doc, layer).to_vec())
                        }
                        DirtyItem::Labels => Payload::Labels(p.labels.clone()),
                        DirtyItem::Sources => Payload::Sources(s.ws.sources.clone()),
                        DirtyItem::Params => Payload::Params(s.ws.params.clone()),
                    };
                    (item.clone(), stamp, payload)
                })
                .collect()
        };

        let mut written = Vec::new();
        let mut failed = Vec::new();
        let mut done = Vec::new();
        for (item, stamp, payload) in pending {
            let root = &self.root;
            let (path, result) = match &payload {
                Payload::Text(d) => (root.join(format!("{}.txt", d.id())), project_dir::write_text(root, d)),
                Payload::Layer(layer, doc, anns) => (
                    project_dir::ann_path(root, layer, doc),
                    project_dir::write_layer_doc(root, layer, doc, anns),
                ),
                Payload::Labels(l) => (root.join(project_dir::LABELS_FILE), project_dir::write_labels(root, l)),
                Payload::Sources(v) => (root.join(project_dir::SOURCES_FILE), project_dir::write_sources(root, v)),
                Payload::Params(Some(p)) => (root.join(project_dir::PARAMS_FILE), project_dir::write_params(root, p)),
                Payload::Params(None) => (root.join(project_dir::PARAMS_FILE), Ok(())),
            };
            match result {
                Ok(()) => {
                    written.push(path);
                    done.push((item, stamp));
                }
                Err(e) => failed.push(FailedWrite {
                    path,
                    error: e.to_string(),
                }),
            }
        }

        let mut s = self.write_state();
        for (item, stamp) in done {
            if s.dirty.get(&item) == Some(&stamp) {
                s.dirty.remove(&item);
            }
        }
        if failed.is_empty() {
            Ok(FlushReport { written })
        } else {
            Err(FlushError { written, failed })
        }
    }
}
