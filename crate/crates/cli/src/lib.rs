//! The `weaklab` command line.
//!
//! Every subcommand works on the project directory given by `--root`.
//! Results are printed to stdout as JSON; `--out FILE` additionally writes
//! the tabular part of a result as CSV. A failure prints one JSON object
//! (`{"error": code, "message": ...}`) to stderr and exits with the status
//! described by [`Exit`].

mod error;

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use weaklab::corpus::{validate, Layer, OffsetUnit, DENOISED_LAYER, GOLD_LAYER};
use weaklab::denoiser::{denoise_corpus, FitConfig};
use weaklab::evaluation::{
    denoising_experiment, dictionary_experiment, score_layers, synth_corpus, CorpusScores, ExperimentConfig,
    MatchMode, SynthSpec,
};
use weaklab::project_dir::{self, LoadOptions, Workspace};
use weaklab::weak_sources::ConflictPolicy;
use weaklab_server::bridge::MODEL_URL_ENV;
use weaklab_server::{bridge_predict, open_root, AppState, ModelServerConfig, ProjectStore};

pub use error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "weaklab", version, about = "Weak labeling, denoising and evaluation for Brat corpora")]
pub struct Cli {
    /// Project directory.
    #[arg(long, global = true, default_value = ".")]
    pub root: PathBuf,
    /// Also write the tabular result as CSV to this file.
    #[arg(long, global = true, alias = "report")]
    pub out: Option<PathBuf>,
    /// Worker threads for document-level work (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Copy a Brat directory into an empty project root.
    Import {
        dir: PathBuf,
        /// Read .ann offsets as UTF-8 byte offsets and convert them.
        #[arg(long)]
        byte_offsets: bool,
    },
    /// Check every layer; exits 1 if anything is wrong.
    Validate,
    /// Run a registered weak source and store its layer.
    Apply {
        #[arg(long)]
        source: String,
        /// Only this document (default: all).
        #[arg(long)]
        doc: Option<String>,
    },
    /// Fit the HMM to source layers and write the `denoised` layer.
    Denoise {
        #[arg(long, value_delimiter = ',', required = true)]
        sources: Vec<String>,
        #[arg(long)]
        iters: Option<usize>,
        /// Relative log-likelihood tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Layer to score against, if present.
        #[arg(long, default_value = GOLD_LAYER)]
        gold: String,
    },
    /// Dictionary recall as a function of the annotated fraction.
    DictExp {
        /// `start:stop:step`, a single ratio or a comma list.
        #[arg(long, default_value = "0.05:0.95:0.05", value_parser = parse_ratios)]
        ratios: Ratios,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = GOLD_LAYER)]
        gold: String,
        /// Leave surfaces seen with several labels out of the dictionary.
        #[arg(long)]
        drop_ambiguous: bool,
    },
    /// Score a layer against a reference layer.
    Eval {
        #[arg(long)]
        pred: String,
        #[arg(long, default_value = GOLD_LAYER)]
        gold: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
    },
    /// Generate a synthetic project into an empty root.
    Synth {
        /// JSON generator settings; missing fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ask a model server for spans and store them as `model:NAME`.
    Predict {
        #[arg(long, env = MODEL_URL_ENV)]
        url: String,
        #[arg(long, default_value = "default")]
        model: String,
        /// Repeatable (default: all documents).
        #[arg(long = "doc")]
        docs: Vec<String>,
        /// Layers sent as weak-annotation columns.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Serve the HTTP API. `WEAKLAB_MODEL_URL` registers a `default` model.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Token,
}

impl From<Mode> for MatchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => MatchMode::ExactSpan,
            Mode::Token => MatchMode::TokenLevel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ratios(pub Vec<f64>);

/// Parses `start:stop:step` (inclusive), a single ratio, or `a,b,c`.
pub fn parse_ratios(s: &str) -> Result<Ratios, String> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, c] => ExperimentConfig::ratio_range(num(a)?, num(b)?, num(c)?)
            .map(Ratios)
            .map_err(|e| e.to_string()),
        [list] => list.split(',').map(num).collect::<Result<_, _>>().map(Ratios),
        _ => Err(format!("expected start:stop:step, got {s:?}")),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return Exit::Ok as i32;
        }
        Err(e) => {
            let fail = CliError::usage("Usage", e.to_string().trim_end());
            let _ = writeln!(err, "{}", fail.json());
            return fail.exit as i32;
        }
    };
    match execute(&cli) {
        Ok(v) => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("JSON values serialize"));
            Exit::Ok as i32
        }
        Err(e) => {
            let _ = writeln!(err, "{}", e.json());
            e.exit as i32
        }
    }
}

/// Runs a parsed command and returns its stdout JSON.
pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    if cli.out.is_some() && !has_table(&cli.command) {
        return Err(CliError::usage("NoTabularOutput", "--out is not supported by this subcommand"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::usage("InvalidFlag", "--jobs must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::validation("ThreadPool", e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn has_table(cmd: &Command) -> bool {
    matches!(
        cmd,
        Command::Validate | Command::Denoise { .. } | Command::DictExp { .. } | Command::Eval { .. }
    )
}

fn dispatch(cli: &Cli) -> Result<Value, CliError> {
    let root = cli.root.as_path();
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Import { dir, byte_offsets } => import(root, dir, *byte_offsets),
        Command::Validate => validate_cmd(root, out),
        Command::Apply { source, doc } => apply(root, source, doc.as_deref()),
        Command::Denoise {
            sources,
            iters,
            tol,
            seed,
            gold,
        } => {
            let mut cfg = FitConfig::default();
            cfg.max_iters = iters.unwrap_or(cfg.max_iters);
            cfg.rel_tol = tol.unwrap_or(cfg.rel_tol);
            cfg.seed = seed.unwrap_or(cfg.seed);
            denoise(root, out, sources, &cfg, gold)
        }
        Command::DictExp {
            ratios,
            trials,
            seed,
            gold,
            drop_ambiguous,
        } => {
            let cfg = ExperimentConfig {
                ratios: ratios.0.clone(),
                trials_per_ratio: *trials,
                seed: *seed,
                policy: if *drop_ambiguous {
                    ConflictPolicy::DropAmbiguous
                } else {
                    ConflictPolicy::MostFrequent
                },
                gold_layer: gold.clone(),
            };
            dict_exp(root, out, &cfg)
        }
        Command::Eval { pred, gold, mode } => eval(root, out, pred, gold, (*mode).into()),
        Command::Synth { spec, seed } => synth(root, spec.as_deref(), *seed),
        Command::Predict {
            url,
            model,
            docs,
            layers,
            timeout_ms,
        } => {
            let mut cfg = ModelServerConfig::new(model.as_str(), url)?;
            if let Some(ms) = timeout_ms {
                cfg = cfg.with_timeout(Duration::from_millis(*ms));
            }
            predict(root, &cfg, docs, layers)
        }
        Command::Serve { port, host } => serve(root, SocketAddr::new(*host, *port)),
    }
}

fn load(root: &Path) -> Result<Workspace, CliError> {
    Ok(project_dir::load(root, LoadOptions::default())?.0)
}

fn write_csv(path: &Path, csv: &str) -> Result<(), CliError> {
    Ok(project_dir::write_atomic(path, csv.as_bytes())?)
}

fn csv_string<R: AsRef<[String]>>(header: &[&str], rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.as_ref()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn is_empty_dir(p: &Path) -> bool {
    match std::fs::read_dir(p) {
        Ok(mut it) => it.next().is_none(),
        Err(_) => !p.exists(),
    }
}

fn require_empty_root(root: &Path) -> Result<(), CliError> {
    if is_empty_dir(root) {
        Ok(())
    } else {
        Err(CliError::usage("RootNotEmpty", format!("{} is not empty", root.display())).with("root", root.display().to_string()))
    }
}

fn import(root: &Path, dir: &Path, byte_offsets: bool) -> Result<Value, CliError> {
    let offsets = if byte_offsets { OffsetUnit::Bytes } else { OffsetUnit::Chars };
    let same = match (dir.canonicalize(), root.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same && byte_offsets {
        return Err(CliError::usage(
            "InPlaceConversion",
            "converting offsets in place would drop non-T lines; pass a different --root",
        ));
    }
    if !same {
        require_empty_root(root)?;
    }
    let (ws, report) = project_dir::load(dir, LoadOptions { offsets })?;
    let violations = validate(&ws.project);
    if !violations.is_empty() {
        return Err(CliError::violations(&violations));
    }
    if !same {
        project_dir::save(root, &ws)?;
    }
    Ok(json!({
        "root": root.display().to_string(),
        "written": !same,
        "offsets": if byte_offsets { "bytes" } else { "chars" },
        "documents": report.documents,
        "annotations": report.annotations,
        "labels": ws.project.labels.iter().collect::<Vec<_>>(),
        "skipped_lines": report.total_skipped(),
        "skipped_by_file": report.skipped_lines.iter().map(|(p, n)| (p.display().to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
        "orphan_ann": report.orphan_ann.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

fn validate_cmd(root: &Path, out: Option<&Path>) -> Result<Value, CliError> {
    let ws = load(root)?;
    let violations = validate(&ws.project);
    if let Some(path) = out {
        let rows = violations
            .iter()
            .map(|v| vec![v.doc_id.clone(), v.layer.clone(), v.annotation_id.clone(), format!("{:?}", v.kind), v.reason.clone()]);
        write_csv(path, &csv_string(&["doc", "layer", "annotation", "kind", "reason"], rows))?;
    }
    if violations.is_empty() {
        let annotations: usize = ws.project.layers.values().flat_map(|l| l.values()).map(Vec::len).sum();
        Ok(json!({
            "valid": true,
            "documents": ws.project.documents.len(),
            "layers": ws.project.layers.keys().collect::<Vec<_>>(),
            "annotations": annotations,
        }))
    } else {
        Err(CliError::violations(&violations))
    }
}

fn apply(root: &Path, source_id: &str, doc: Option<&str>) -> Result<Value, CliError> {
    let ws = load(root)?;
    let source = ws
        .sources
        .iter()
        .find(|s| s.id == source_id)
        .ok_or_else(|| CliError::usage("UnknownSource", format!("no source {source_id:?}")).with("source", source_id))?;
    source.validate(&ws.project.labels)?;
    let targets: Vec<&str> = match doc {
        Some(d) if ws.project.doc(d).is_none() => {
            return Err(CliError::usage("UnknownDocument", format!("no document {d:?}")).with("doc", d))
        }
        Some(d) => vec![d],
        None => ws.project.doc_ids().collect(),
    };
    let layer: Layer = targets
        .par_iter()
        .map(|id| {
            let spans = source.apply(ws.project.doc(id).expect("checked"), &ws.project.labels)?;
            Ok((id.to_string(), spans))
        })
        .collect::<Result<_, CliError>>()?;
    for (id, spans) in &layer {
        project_dir::write_layer_doc(root, &source.id, id, spans)?;
    }
    Ok(json!({
        "source": source.id,
        "layer": source.id,
        "documents": layer.len(),
        "annotations": layer.values().map(Vec::len).sum::<usize>(),
    }))
}

fn denoise(root: &Path, out: Option<&Path>, sources: &[String], cfg: &FitConfig, gold: &str) -> Result<Value, CliError> {
    cfg.check()?;
    let mut ws = load(root)?;
    let has_gold = ws.project.layer(gold).is_some();
    if out.is_some() && !has_gold {
        return Err(CliError::usage("UnknownLayer", format!("--out needs the reference layer {gold:?}")).with("layer", gold));
    }
    let (outcome, report) = if has_gold {
        let run = denoising_experiment(&ws.project, sources, cfg, gold)?;
        (run.outcome, Some(run.report))
    } else {
        (denoise_corpus(&ws.project, sources, cfg)?, None)
    };
    let annotations: usize = outcome.layer.values().map(Vec::len).sum();
    ws.project.layers.insert(DENOISED_LAYER.to_string(), outcome.layer);
    project_dir::write_layer(root, &ws.project, DENOISED_LAYER)?;
    project_dir::write_params(root, &outcome.params)?;
    if let (Some(path), Some(r)) = (out, &report) {
        write_csv(path, &r.to_csv())?;
    }
    Ok(json!({
        "layer": DENOISED_LAYER,
        "sources": sources,
        "documents": ws.project.documents.len(),
        "annotations": annotations,
        "iterations": outcome.trace.len().saturating_sub(1),
        "converged": outcome.converged,
        "log_likelihood": outcome.trace.last(),
        "report": report,
    }))
}

fn dict_exp(root: &Path, out: Option<&Path>, cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let ws = load(root)?;
    let curve = dictionary_experiment(&ws.project, cfg)?;
    if let Some(path) = out {
        write_csv(path, &curve.to_csv())?;
    }
    Ok(serde_json::to_value(&curve).expect("curve serializes"))
}

fn eval(root: &Path, out: Option<&Path>, pred: &str, gold: &str, mode: MatchMode) -> Result<Value, CliError> {
    let ws = load(root)?;
    let scores: CorpusScores = score_layers(&ws.project, pred, gold, mode)?;
    if let Some(path) = out {
        let row = |name: &str, c: &weaklab::evaluation::MatchCounts| {
            let s = c.scores();
            vec![
                name.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                format!("{:.6}", s.precision),
                format!("{:.6}", s.recall),
                format!("{:.6}", s.f1),
            ]
        };
        let rows = scores
            .per_doc
            .iter()
            .map(|(d, c)| row(d, c))
            .chain(std::iter::once(row("micro", &scores.micro)));
        write_csv(path, &csv_string(&["doc", "tp", "fp", "fn", "precision", "recall", "f1"], rows))?;
    }
    let s = scores.micro.scores();
    let mut v = serde_json::to_value(&scores).expect("scores serialize");
    v["pred"] = json!(pred);
    v["gold"] = json!(gold);
    v["precision"] = json!(s.precision);
    v["recall"] = json!(s.recall);
    v["f1"] = json!(s.f1);
    Ok(v)
}

fn synth(root: &Path, spec_path: Option<&Path>, seed: u64) -> Result<Value, CliError> {
    let spec: SynthSpec = match spec_path {
        None => SynthSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage("BadSpec", format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage("BadSpec", format!("{}: {e}", p.display())))?
        }
    };
    require_empty_root(root)?;
    let corpus = synth_corpus(&spec, seed).map_err(|e| CliError::usage("BadSpec", e.to_string()))?;
    let ws = Workspace {
        project: corpus.project,
        sources: vec![],
        params: None,
    };
    project_dir::save(root, &ws)?;
    let layers: serde_json::Map<String, Value> = ws
        .project
        .layers
        .iter()
        .map(|(name, l)| (name.clone(), json!(l.values().map(Vec::len).sum::<usize>())))
        .collect();
    Ok(json!({
        "root": root.display().to_string(),
        "seed": seed,
        "documents": ws.project.documents.len(),
        "labels": ws.project.labels.iter().collect::<Vec<_>>(),
        "sources": spec.sources.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
        "layers": layers,
    }))
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::validation("Runtime", e.to_string()))
}

fn predict(root: &Path, cfg: &ModelServerConfig, docs: &[String], layers: &[String]) -> Result<Value, CliError> {
    let (store, _) = ProjectStore::open(root, LoadOptions::default())?;
    let docs: Vec<String> = if docs.is_empty() {
        store.read(|ws| ws.project.documents.keys().cloned().collect())
    } else {
        docs.to_vec()
    };
    let client = reqwest::Client::new();
    let outcome = runtime()?.block_on(bridge_predict(&client, cfg, &store, &docs, layers))?;
    store
        .flush()
        .map_err(|e| CliError::validation("IoError", e.to_string()))?;
    Ok(json!({
        "layer": outcome.layer,
        "documents": outcome.annotations.len(),
        "annotations": outcome.annotations.values().map(Vec::len).sum::<usize>(),
        "changed_documents": outcome.changed_documents,
        "new_labels": outcome.new_labels,
    }))
}

fn serve(root: &Path, addr: SocketAddr) -> Result<Value, CliError> {
    let projects = open_root(root, LoadOptions::default())?;
    let mut state = AppState::new(projects);
    if let Some(cfg) = ModelServerConfig::from_env() {
        state = state.with_model(cfg?);
    }
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::usage("Bind", format!("{addr}: {e}")))?;
        let bound = listener.local_addr().map_err(|e| CliError::usage("Bind", e.to_string()))?;
        println!("{}", json!({"listening": format!("http://{bound}")}));
        let _ = std::io::stdout().flush();
        weaklab_server::serve(listener, state.into_shared(), weaklab_server::ctrl_c())
            .await
            .map_err(|e| CliError::validation("IoError", e.to_string()))
    })?;
    Ok(json!({"stopped": true}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_syntax() {
        let r = parse_ratios("0.05:0.95:0.05").unwrap().0;
        assert_eq!(r.len(), 19);
        assert_eq!(r[2], 0.15);
        assert_eq!(*r.last().unwrap(), 0.95);
        assert_eq!(parse_ratios("0.15").unwrap().0, vec![0.15]);
        assert_eq!(parse_ratios("0.1,0.5").unwrap().0, vec![0.1, 0.5]);
        assert!(parse_ratios("0.1:0.2").is_err());
        assert!(parse_ratios("a:b:c").is_err());
        assert!(parse_ratios("0.5:0.1:0.1").is_err());
    }

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("weaklab").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors_are_json_with_exit_2() {
        let (code, out, err) = run_str(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(out.is_empty());
        let v: Value = serde_json::from_str(&err).unwrap();
        assert_eq!(v["error"], "Usage");
        let (code, _, err) = run_str(&["dict-exp", "--ratios", "1:0:1"]);
        assert_eq!(code, 2, "{err}");
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("dict-exp"));
    }

    #[test]
    fn out_rejected_where_there_is_no_table() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("x.csv");
        let (code, _, err) = run_str(&["--root", dir.path().to_str().unwrap(), "--out", csv.to_str().unwrap(), "synth"]);
        assert_eq!(code, 2);
        assert!(err.contains("NoTabularOutput"));
        assert!(is_empty_dir(dir.path()));
    }
}
