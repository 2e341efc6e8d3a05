//! On-disk project layout.
//!
//! ```text
//! project/
//!   <name>.txt                    document text
//!   <name>.ann                    gold annotations
//!   layers/<layer>/<name>.ann     every other layer
//!   labels.json
//!   sources.json
//!   denoiser_params.json          written after a fit
//! ```
//!
//! Every write goes to a temporary file in the target directory and is then
//! renamed over the destination.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    parse_ann_with, serialize_ann, AnnError, Document, LabelSet, Layer, OffsetUnit, Project, Provenance,
    SpanAnnotation, GOLD_LAYER,
};
use crate::denoiser::HmmParams;
use crate::weak_sources::WeakSource;

pub const LABELS_FILE: &str = "labels.json";
pub const SOURCES_FILE: &str = "sources.json";
pub const PARAMS_FILE: &str = "denoiser_params.json";
pub const LAYERS_DIR: &str = "layers";

#[derive(Debug, Error)]
pub enum ProjectIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{} annotation file(s) failed to parse", .0.len())]
    Ann(Vec<FileAnnError>),
    #[error("invalid name {0:?}: must be a non-empty file name")]
    BadName(String),
    #[error("{0}: not a project directory")]
    NotAProject(PathBuf),
}

/// A parse failure in one `.ann` file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileAnnError {
    pub path: PathBuf,
    pub error: String,
}

impl FileAnnError {
    fn new(path: &Path, error: AnnError) -> Self {
        FileAnnError {
            path: path.to_path_buf(),
            error: error.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectIoError + '_ {
    move |source| ProjectIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-fatal findings while loading.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub documents: usize,
    pub annotations: usize,
    /// Non-`T` lines skipped, per file that had any.
    pub skipped_lines: BTreeMap<PathBuf, usize>,
    /// `.ann` files without a matching `.txt`.
    pub orphan_ann: Vec<PathBuf>,
}

impl LoadReport {
    pub fn total_skipped(&self) -> usize {
        self.skipped_lines.values().sum()
    }
}

/// Everything stored in a project directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub project: Project,
    pub sources: Vec<WeakSource>,
    pub params: Option<HmmParams>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub offsets: OffsetUnit,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelsOnDisk {
    Plain(Vec<String>),
    Full(LabelSet),
}

/// Document names must be plain file names so ids map to files one to one.
pub fn check_name(name: &str) -> Result<(), ProjectIoError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\', '\0'])
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ProjectIoError::BadName(name.to_string()))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, ProjectIoError> {
    match fs::read_to_string(path) {
        Ok(s) => serde_json::from_str(&s).map(Some).map_err(|e| ProjectIoError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Files in `dir` with extension `ext`, sorted by stem.
fn files_with_ext(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>, ProjectIoError> {
    let mut out = BTreeMap::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(io_err(dir)(e)),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if check_name(stem).is_ok() {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn read_ann(
    path: &Path,
    doc: &Document,
    offsets: OffsetUnit,
    provenance: &Provenance,
    report: &mut LoadReport,
    errors: &mut Vec<FileAnnError>,
) -> Result<Vec<SpanAnnotation>, ProjectIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match parse_ann_with(&text, doc, offsets) {
        Ok(mut parsed) => {
            if parsed.skipped > 0 {
                report.skipped_lines.insert(path.to_path_buf(), parsed.skipped);
            }
            report.annotations += parsed.annotations.len();
            for a in &mut parsed.annotations {
                a.provenance = provenance.clone();
            }
            Ok(parsed.annotations)
        }
        Err(e) => {
            errors.push(FileAnnError::new(path, e));
            Ok(Vec::new())
        }
    }
}

/// Reads a plain Brat collection: `<name>.txt` with optional `<name>.ann`
/// beside it. Labels come from `labels.json` when present, otherwise from
/// the annotations.
pub fn read_brat_dir(dir: &Path, opts: LoadOptions) -> Result<(Project, LoadReport), ProjectIoError> {
    let (project, report, _) = read_docs_and_gold(dir, opts)?;
    Ok((project, report))
}

fn read_docs_and_gold(dir: &Path, opts: LoadOptions) -> Result<(Project, LoadReport, bool), ProjectIoError> {
    if !dir.is_dir() {
        return Err(ProjectIoError::NotAProject(dir.to_path_buf()));
    }
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "project".into());
    let mut project = Project::new(name, LabelSet::default());
    let mut report = LoadReport::default();
    let mut errors = Vec::new();

    let texts = files_with_ext(dir, "txt")?;
    let anns = files_with_ext(dir, "ann")?;
    for (stem, path) in &texts {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        project.add_document(Document::new(stem.clone(), text));
    }
    report.documents = project.documents.len();
    let mut any_gold = false;
    for (stem, path) in &anns {
        let Some(doc) = project.documents.get(stem) else {
            report.orphan_ann.push(path.clone());
            continue;
        };
        any_gold = true;
        let spans = read_ann(path, doc, opts.offsets, &Provenance::Manual, &mut report, &mut errors)?;
        project.set_annotations(stem, GOLD_LAYER, spans);
    }
    if !errors.is_empty() {
        return Err(ProjectIoError::Ann(errors));
    }

    let labels = match read_json::<LabelsOnDisk>(&dir.join(LABELS_FILE))? {
        Some(LabelsOnDisk::Plain(labels)) => LabelSet::new(labels),
        Some(LabelsOnDisk::Full(set)) => set,
        None => LabelSet::default(),
    };
    project.labels = labels;
    Ok((project, report, any_gold))
}

fn infer_labels(project: &mut Project) {
    let found: Vec<String> = project
        .layers
        .values()
        .flat_map(|l| l.values().flatten().map(|a| a.label.clone()))
        .collect();
    for l in found {
        project.labels.insert(l);
    }
}

/// Loads a project directory with every layer, the sources and, if present,
/// the fitted denoiser parameters.
pub fn load(root: &Path, opts: LoadOptions) -> Result<(Workspace, LoadReport), ProjectIoError> {
    let has_labels = root.join(LABELS_FILE).is_file();
    let (mut project, mut report, any_gold) = read_docs_and_gold(root, opts)?;
    if any_gold {
        // every document has a gold entry once any does
        let ids: Vec<String> = project.documents.keys().cloned().collect();
        let gold = project.layers.entry(GOLD_LAYER.to_string()).or_default();
        for id in ids {
            gold.entry(id).or_default();
        }
    }

    let mut errors = Vec::new();
    let layers_dir = root.join(LAYERS_DIR);
    if layers_dir.is_dir() {
        let mut names: Vec<(String, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&layers_dir).map_err(io_err(&layers_dir))? {
            let entry = entry.map_err(io_err(&layers_dir))?;
            if entry.path().is_dir() {
                if let Some(n) = entry.file_name().to_str() {
                    names.push((n.to_string(), entry.path()));
                }
            }
        }
        names.sort();
        for (layer, dir) in names {
            let provenance = Provenance::for_layer(&layer);
            let mut spans_by_doc = Layer::new();
            for (stem, path) in files_with_ext(&dir, "ann")? {
                let Some(doc) = project.documents.get(&stem) else {
                    report.orphan_ann.push(path);
                    continue;
                };
                // layer files are written by us with char offsets
                let spans = read_ann(&path, doc, OffsetUnit::Chars, &provenance, &mut report, &mut errors)?;
                spans_by_doc.insert(stem, spans);
            }
            project.layers.insert(layer, spans_by_doc);
        }
    }
    if !errors.is_empty() {
        return Err(ProjectIoError::Ann(errors));
    }
    if !has_labels {
        infer_labels(&mut project);
    }
    let sources = read_json::<Vec<WeakSource>>(&root.join(SOURCES_FILE))?.unwrap_or_default();
    let params = read_json::<HmmParams>(&root.join(PARAMS_FILE))?;
    Ok((
        Workspace {
            project,
            sources,
            params,
        },
        report,
    ))
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ProjectIoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".weaklab-")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

/// Path of the `.ann` file holding `doc` in `layer`.
pub fn ann_path(root: &Path, layer: &str, doc: &str) -> PathBuf {
    if layer == GOLD_LAYER {
        root.join(format!("{doc}.ann"))
    } else {
        root.join(LAYERS_DIR).join(layer).join(format!("{doc}.ann"))
    }
}

pub fn write_layer_doc(root: &Path, layer: &str, doc: &str, anns: &[SpanAnnotation]) -> Result<(), ProjectIoError> {
    check_name(doc)?;
    check_name(layer)?;
    write_atomic(&ann_path(root, layer, doc), serialize_ann(anns).as_bytes())
}

pub fn write_text(root: &Path, doc: &Document) -> Result<(), ProjectIoError> {
    check_name(doc.id())?;
    write_atomic(&root.join(format!("{}.txt", doc.id())), doc.text().as_bytes())
}

pub fn write_labels(root: &Path, labels: &LabelSet) -> Result<(), ProjectIoError> {
    write_atomic(&root.join(LABELS_FILE), &to_json(labels))
}

pub fn write_sources(root: &Path, sources: &[WeakSource]) -> Result<(), ProjectIoError> {
    write_atomic(&root.join(SOURCES_FILE), &to_json(&sources))
}

pub fn write_params(root: &Path, params: &HmmParams) -> Result<(), ProjectIoError> {
    write_atomic(&root.join(PARAMS_FILE), &to_json(params))
}

/// Writes every layer of a project (one file per document in each layer).
pub fn write_layer(root: &Path, project: &Project, layer: &str) -> Result<(), ProjectIoError> {
    let Some(l) = project.layer(layer) else { return Ok(()) };
    for id in project.doc_ids() {
        write_layer_doc(root, layer, id, l.get(id).map(Vec::as_slice).unwrap_or(&[]))?;
    }
    Ok(())
}

/// Writes the whole workspace: texts, all layers, labels, sources and
/// parameters.
pub fn save(root: &Path, ws: &Workspace) -> Result<(), ProjectIoError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    for doc in ws.project.documents.values() {
        write_text(root, doc)?;
    }
    for layer in ws.project.layers.keys() {
        write_layer(root, &ws.project, layer)?;
    }
    write_labels(root, &ws.project.labels)?;
    write_sources(root, &ws.sources)?;
    if let Some(p) = &ws.params {
        write_params(root, p)?;
    }
    Ok(())
}
