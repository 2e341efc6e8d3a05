use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{align_span, is_non_overlapping, Document, Project, SpanAnnotation, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// A prediction counts only if label, start and end all agree.
    #[default]
    #[serde(alias = "exact")]
    ExactSpan,
    /// Per-token BIO tags, `O` excluded.
    #[serde(alias = "token")]
    TokenLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Precision, recall and F1 derived from [`MatchCounts`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchCounts {
    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp)
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn scores(&self) -> Scores {
        Scores {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }

    pub fn add(&mut self, other: &MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn check(spans: &[SpanAnnotation], side: &'static str) -> Result<(), EvalError> {
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    if is_non_overlapping(&sorted) {
        Ok(())
    } else {
        Err(EvalError::Overlap { side })
    }
}

/// Scores predicted spans against gold spans of the same document.
///
/// `tokens` is only consulted in [`MatchMode::TokenLevel`].
pub fn score_spans(
    pred: &[SpanAnnotation],
    gold: &[SpanAnnotation],
    mode: MatchMode,
    tokens: &[Token],
) -> Result<MatchCounts, EvalError> {
    check(pred, "pred")?;
    check(gold, "gold")?;
    Ok(match mode {
        MatchMode::ExactSpan => exact(pred, gold),
        MatchMode::TokenLevel => token_level(pred, gold, tokens),
    })
}

fn exact(pred: &[SpanAnnotation], gold: &[SpanAnnotation]) -> MatchCounts {
    let key = |s: &SpanAnnotation| (s.start, s.end, s.label.clone());
    let mut gold_keys: Vec<_> = gold.iter().map(key).collect();
    gold_keys.sort();
    let tp = pred
        .iter()
        .filter(|p| gold_keys.binary_search(&key(p)).is_ok())
        .count();
    MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

// (is_begin, label) per token, None for O
fn token_tags<'a>(spans: &'a [SpanAnnotation], tokens: &[Token]) -> Vec<Option<(bool, &'a str)>> {
    let mut out = vec![None; tokens.len()];
    for s in spans {
        if let Ok(r) = align_span(s, tokens) {
            for t in r.start..r.end {
                out[t] = Some((t == r.start, s.label.as_str()));
            }
        }
    }
    out
}

fn token_level(pred: &[SpanAnnotation], gold: &[SpanAnnotation], tokens: &[Token]) -> MatchCounts {
    let p = token_tags(pred, tokens);
    let g = token_tags(gold, tokens);
    let mut c = MatchCounts::default();
    for (p, g) in p.iter().zip(&g) {
        match (p, g) {
            (Some(a), Some(b)) if a == b => c.tp += 1,
            (a, b) => {
                c.fp += a.is_some() as usize;
                c.fn_ += b.is_some() as usize;
            }
        }
    }
    c
}

/// Corpus-level result of [`score_layers`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub mode: MatchMode,
    /// Counts summed over documents.
    pub micro: MatchCounts,
    /// Mean of per-document recall.
    pub macro_recall: f64,
    pub per_doc: BTreeMap<String, MatchCounts>,
}

/// Scores layer `pred` against layer `gold` on every document of the
/// project; a document missing from a layer has no spans in it.
pub fn score_layers(project: &Project, pred: &str, gold: &str, mode: MatchMode) -> Result<CorpusScores, EvalError> {
    for layer in [pred, gold] {
        if project.layer(layer).is_none() {
            return Err(EvalError::MissingLayer(layer.to_string()));
        }
    }
    score_docs(project.documents.values(), |d| project.annotations(d, pred), |d| project.annotations(d, gold), mode)
}

pub(crate) fn score_docs<'a, I, P, G>(docs: I, pred: P, gold: G, mode: MatchMode) -> Result<CorpusScores, EvalError>
where
    I: IntoIterator<Item = &'a Document>,
    P: Fn(&str) -> &'a [SpanAnnotation],
    G: Fn(&str) -> &'a [SpanAnnotation],
{
    let mut micro = MatchCounts::default();
    let mut per_doc = BTreeMap::new();
    for doc in docs {
        let c = score_spans(pred(doc.id()), gold(doc.id()), mode, doc.tokens())
            .map_err(|e| e.in_doc(doc.id()))?;
        micro.add(&c);
        per_doc.insert(doc.id().to_string(), c);
    }
    let macro_recall = if per_doc.is_empty() {
        1.0
    } else {
        per_doc.values().map(MatchCounts::recall).sum::<f64>() / per_doc.len() as f64
    };
    Ok(CorpusScores {
        mode,
        micro,
        macro_recall,
        per_doc,
    })
}
