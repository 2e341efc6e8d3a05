use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dict_exp::fmt;
use super::metrics::{score_docs, CorpusScores, MatchMode, Scores};
use super::EvalError;
use crate::corpus::{Layer, Project, SpanAnnotation};
use crate::denoiser::{
    build_grids, decode_bio, denoise_corpus, encode_bio, majority_vote, DenoiseOutcome, FitConfig, Tag, TagSpace,
};
use crate::weak_sources::{resolve_overlaps, VoteGrid};

/// Name of the merged-sources row in a [`DenoiseReport`].
pub const MERGED_ROW: &str = "merged";
pub const MAJORITY_ROW: &str = "majority_vote";
pub const DENOISED_ROW: &str = "denoised";

/// Scores of one layer against gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: String,
    /// Micro exact-span scores.
    pub exact: Scores,
    /// Micro token-level scores.
    pub token: Scores,
    /// Mean per-document exact-span recall.
    pub macro_recall: f64,
    /// Fraction of tokens whose BIO tag (O included) matches gold.
    pub token_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    /// Mean per-document recall of the overlap-resolved union of sources.
    pub recall_before: f64,
    /// Mean per-document recall of the denoised layer.
    pub recall_after: f64,
    pub majority_vote_recall: f64,
    pub per_source_recall: BTreeMap<String, f64>,
    /// One row per source, then merged, majority vote and denoised.
    pub rows: Vec<LayerScores>,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl DenoiseReport {
    pub fn row(&self, layer: &str) -> Option<&LayerScores> {
        self.rows.iter().find(|r| r.layer == layer)
    }

    /// `denoise_report.csv`: micro exact-span scores per row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer", "precision", "recall", "f1"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.layer.clone(), fmt(r.exact.precision), fmt(r.exact.recall), fmt(r.exact.f1)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Everything [`denoising_experiment`] produced.
#[derive(Debug, Clone)]
pub struct DenoiseRun {
    pub report: DenoiseReport,
    pub outcome: DenoiseOutcome,
    pub majority: Layer,
    pub merged: Layer,
}

/// Compares each source, their overlap-resolved union, per-token majority
/// vote and the HMM's output against `gold_layer`.
///
/// In the union, a source listed earlier wins overlaps it would otherwise
/// tie.
pub fn denoising_experiment(
    project: &Project,
    sources: &[String],
    cfg: &FitConfig,
    gold_layer: &str,
) -> Result<DenoiseRun, EvalError> {
    if project.layer(gold_layer).is_none() {
        return Err(EvalError::MissingLayer(gold_layer.to_string()));
    }
    let outcome = denoise_corpus(project, sources, cfg)?;
    let tags = outcome.params.tags.clone();
    let grids = build_grids(project, sources, &tags)?;

    let mut majority = Layer::new();
    for g in &grids {
        let doc = &project.documents[&g.doc_id];
        majority.insert(g.doc_id.clone(), decode_bio(&majority_vote(g, &tags), doc, &tags));
    }
    let mut merged = Layer::new();
    for id in project.doc_ids() {
        let cands = sources
            .iter()
            .enumerate()
            .flat_map(|(rank, s)| {
                project
                    .annotations(id, s)
                    .iter()
                    .map(move |a| (a.clone(), -(rank as i64)))
            })
            .collect();
        merged.insert(id.to_string(), resolve_overlaps(cands));
    }

    let gold = project.layer(gold_layer).expect("checked");
    let mut rows = Vec::new();
    for s in sources {
        rows.push(layer_scores(project, s, project.layer(s).expect("built grids"), gold, &tags)?);
    }
    rows.push(layer_scores(project, MERGED_ROW, &merged, gold, &tags)?);
    rows.push(layer_scores(project, MAJORITY_ROW, &majority, gold, &tags)?);
    rows.push(layer_scores(project, DENOISED_ROW, &outcome.layer, gold, &tags)?);

    let recall = |name: &str| rows.iter().find(|r| r.layer == name).map(|r| r.macro_recall).unwrap_or(0.0);
    let report = DenoiseReport {
        recall_before: recall(MERGED_ROW),
        recall_after: recall(DENOISED_ROW),
        majority_vote_recall: recall(MAJORITY_ROW),
        per_source_recall: sources.iter().map(|s| (s.clone(), recall(s))).collect(),
        trace: outcome.trace.clone(),
        converged: outcome.converged,
        rows,
    };
    Ok(DenoiseRun {
        report,
        outcome,
        majority,
        merged,
    })
}

fn layer_scores(project: &Project, name: &str, pred: &Layer, gold: &Layer, tags: &TagSpace) -> Result<LayerScores, EvalError> {
    let exact = score(project, pred, gold, MatchMode::ExactSpan)?;
    let token = score(project, pred, gold, MatchMode::TokenLevel)?;
    Ok(LayerScores {
        layer: name.to_string(),
        exact: exact.micro.scores(),
        token: token.micro.scores(),
        macro_recall: exact.macro_recall,
        token_accuracy: token_accuracy(project, pred, gold, tags)?,
    })
}

fn score(project: &Project, pred: &Layer, gold: &Layer, mode: MatchMode) -> Result<CorpusScores, EvalError> {
    score_docs(project.documents.values(), |id| slice(pred, id), |id| slice(gold, id), mode)
}

fn slice<'a>(layer: &'a Layer, id: &str) -> &'a [SpanAnnotation] {
    layer.get(id).map(Vec::as_slice).unwrap_or(&[])
}

/// Fraction of tokens, over the whole project, where the BIO encodings of
/// `pred` and `gold` agree.
pub fn token_accuracy(project: &Project, pred: &Layer, gold: &Layer, tags: &TagSpace) -> Result<f64, EvalError> {
    let (mut right, mut total) = (0usize, 0usize);
    for doc in project.documents.values() {
        let enc = |l: &Layer| encode_bio(slice(l, doc.id()), doc.tokens(), tags);
        let (p, g) = (enc(pred)?, enc(gold)?);
        right += p.iter().zip(&g).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}

/// Counts of (true tag, observed column) per source over the grids, with
/// column `K` for abstentions: `[source][tag][column]`.
pub fn confusion_counts(grids: &[VoteGrid], gold: &BTreeMap<String, Vec<Tag>>, tags: &TagSpace) -> Vec<Vec<Vec<usize>>> {
    let k = tags.len();
    let n_sources = grids.first().map_or(0, VoteGrid::n_sources);
    let mut out = vec![vec![vec![0usize; k + 1]; k]; n_sources];
    for g in grids {
        let Some(truth) = gold.get(&g.doc_id) else { continue };
        for (t, &y) in truth.iter().enumerate().take(g.n_tokens) {
            for (j, o) in g.row(t).iter().enumerate() {
                out[j][y][o.unwrap_or(k)] += 1;
            }
        }
    }
    out
}

/// Gold BIO tags of every document, for [`confusion_counts`].
pub fn gold_tags(project: &Project, gold_layer: &str, tags: &TagSpace) -> Result<BTreeMap<String, Vec<Tag>>, EvalError> {
    project
        .documents
        .values()
        .map(|d| {
            let spans = project.annotations(d.id(), gold_layer);
            Ok((d.id().to_string(), encode_bio(spans, d.tokens(), tags)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GOLD_LAYER;
    use crate::evaluation::{synth_corpus, SynthSpec};

    #[test]
    fn perfect_source_before_equals_after() {
        let spec = SynthSpec {
            n_docs: 20,
            tokens_per_doc: 80,
            ..Default::default()
        }
        .with_sources(&[("p", 1.0, 0.0)]);
        let c = synth_corpus(&spec, 3).unwrap();
        let run = denoising_experiment(&c.project, &["p".into()], &FitConfig::default(), GOLD_LAYER).unwrap();
        let r = &run.report;
        assert_eq!(r.recall_before, 1.0);
        assert_eq!(r.recall_after, 1.0);
        assert_eq!(r.per_source_recall["p"], 1.0);
    }

    #[test]
    fn report_schema() {
        let spec = SynthSpec {
            n_docs: 8,
            tokens_per_doc: 50,
            ..Default::default()
        }
        .with_sources(&[("a", 0.8, 0.3), ("b", 0.6, 0.3)]);
        let c = synth_corpus(&spec, 1).unwrap();
        let run = denoising_experiment(&c.project, &["a".into(), "b".into()], &FitConfig::default(), GOLD_LAYER).unwrap();
        let r = &run.report;
        for v in [r.recall_before, r.recall_after, r.majority_vote_recall] {
            assert!((0.0..=1.0).contains(&v));
        }
        let names: Vec<_> = r.rows.iter().map(|x| x.layer.as_str()).collect();
        assert_eq!(names, ["a", "b", MERGED_ROW, MAJORITY_ROW, DENOISED_ROW]);
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,precision,recall,f1\n"));
        assert_eq!(csv.lines().count(), 6);
        let json = serde_json::to_value(r).unwrap();
        for key in ["recall_before", "recall_after", "majority_vote_recall"] {
            assert!(json[key].is_number(), "{key}");
        }
    }

    #[test]
    fn confusion_of_perfect_source_is_diagonal() {
        let spec = SynthSpec {
            n_docs: 5,
            tokens_per_doc: 40,
            ..Default::default()
        }
        .with_sources(&[("p", 1.0, 0.0)]);
        let c = synth_corpus(&spec, 2).unwrap();
        let grids = build_grids(&c.project, &["p".into()], &c.tags).unwrap();
        let m = confusion_counts(&grids, &c.gold_tags, &c.tags);
        let k = c.tags.len();
        for y in 0..k {
            for o in 0..=k {
                let expected_nonzero = if y == 0 { o == k } else { o == y };
                if !expected_nonzero {
                    assert_eq!(m[0][y][o], 0, "{y} {o}");
                }
            }
        }
        assert_eq!(gold_tags(&c.project, GOLD_LAYER, &c.tags).unwrap(), c.gold_tags);
    }
}
