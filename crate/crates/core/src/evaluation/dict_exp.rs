use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{score_spans, MatchCounts, MatchMode};
use super::EvalError;
use crate::corpus::{Document, Project, Provenance, SpanAnnotation, GOLD_LAYER};
use crate::weak_sources::{build_dictionary, ConflictPolicy, DictionaryIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Annotated fractions, ascending, each in (0, 1].
    pub ratios: Vec<f64>,
    pub trials_per_ratio: usize,
    pub seed: u64,
    pub policy: ConflictPolicy,
    pub gold_layer: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ratios: (1..=19).map(|i| i as f64 * 0.05).collect(),
            trials_per_ratio: 1000,
            seed: 0,
            policy: ConflictPolicy::MostFrequent,
            gold_layer: GOLD_LAYER.to_string(),
        }
    }
}

impl ExperimentConfig {
    /// Ratios `start, start + step, ...` up to `stop` inclusive (with a
    /// little slack for rounding).
    pub fn ratio_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, EvalError> {
        if !(step > 0.0) || !(start > 0.0) || !(stop >= start) {
            return Err(EvalError::InvalidConfig(format!("bad ratio range {start}:{stop}:{step}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // round to 12 digits so 0.05*3 prints as 0.15
        Ok((0..=n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    }

    fn check(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.trials_per_ratio < 1 {
            return bad("trials_per_ratio must be at least 1");
        }
        if self.ratios.is_empty() {
            return bad("no ratios");
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad("ratios must lie in (0, 1]");
        }
        if self.ratios.windows(2).any(|w| w[0] > w[1]) {
            return bad("ratios must be sorted ascending");
        }
        Ok(())
    }
}

/// Mean recalls for one ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ratio: f64,
    pub n_annotated: usize,
    /// Recall of the dictionary on the documents it was not built from;
    /// `None` when no document is left over.
    pub mean_recall_unannotated: Option<f64>,
    /// Recall over all documents, counting annotated ones as fully found.
    pub mean_recall_all: f64,
    /// Recall of the dictionary applied back to its own documents.
    pub mean_recall_annotated: f64,
    /// Standard deviation of the unannotated recall across trials.
    pub stddev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictCurve {
    pub trials_per_ratio: usize,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl DictCurve {
    /// `dict_curve.csv`; an absent value is an empty field.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ratio", "mean_recall_unannotated", "mean_recall_all", "stddev"])
            .expect("in-memory write");
        let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
        for p in &self.points {
            w.write_record([fmt(p.ratio), opt(p.mean_recall_unannotated), fmt(p.mean_recall_all), opt(p.stddev)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Aligned text table with every column, for eyeballing or plotting.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6} {:>10} {:>12} {:>10} {:>10} {:>8}\n",
            "ratio", "annotated", "unannotated", "all", "self", "stddev"
        );
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        for p in &self.points {
            out.push_str(&format!(
                "{:>6.2} {:>10} {:>12} {:>10.4} {:>10.4} {:>8}\n",
                p.ratio,
                p.n_annotated,
                opt(p.mean_recall_unannotated),
                p.mean_recall_all,
                p.mean_recall_annotated,
                opt(p.stddev)
            ));
        }
        out
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

struct Trial {
    unannotated: Option<f64>,
    all: f64,
    annotated: f64,
}

/// Harvests a dictionary from a random subset of documents and measures how
/// much of the gold it recovers elsewhere, for every ratio.
///
/// Trial `i` draws its subset from a permutation seeded with `seed + i`,
/// shared by all ratios, so larger ratios annotate supersets. Recall is
/// micro exact-span recall.
pub fn dictionary_experiment(project: &Project, cfg: &ExperimentConfig) -> Result<DictCurve, EvalError> {
    cfg.check()?;
    let gold = project
        .layer(&cfg.gold_layer)
        .ok_or_else(|| EvalError::MissingLayer(cfg.gold_layer.clone()))?;
    let ids: Vec<&str> = project.doc_ids().collect();
    let n = ids.len();
    let sizes: Vec<usize> = cfg
        .ratios
        .iter()
        .map(|&r| {
            let k = (r * n as f64 - 1e-9).ceil() as usize;
            if k < 1 {
                Err(EvalError::InsufficientDocs { ratio: r, n_docs: n })
            } else {
                Ok(k.min(n))
            }
        })
        .collect::<Result<_, _>>()?;
    let gold_of = |id: &str| gold.get(id).map(Vec::as_slice).unwrap_or(&[]);
    let total_gold: usize = ids.iter().map(|id| gold_of(id).len()).sum();

    // trials x ratios
    let results: Vec<Vec<Trial>> = (0..cfg.trials_per_ratio)
        .into_par_iter()
        .map(|i| {
            let mut order = ids.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64)));
            sizes
                .iter()
                .map(|&k| {
                    let (picked, rest) = order.split_at(k);
                    let dict = build_dictionary(gold, picked, cfg.policy);
                    let index = dict.index();
                    let recall_on = |docs: &[&str]| -> Result<MatchCounts, EvalError> {
                        let mut c = MatchCounts::default();
                        for id in docs {
                            let doc = &project.documents[*id];
                            let pred = dictionary_spans(&index, doc);
                            c.add(&score_spans(&pred, gold_of(id), MatchMode::ExactSpan, doc.tokens()).map_err(|e| e.in_doc(id))?);
                        }
                        Ok(c)
                    };
                    let un = recall_on(rest)?;
                    let own = recall_on(picked)?;
                    let own_gold: usize = picked.iter().map(|id| gold_of(id).len()).sum();
                    let all = if total_gold == 0 {
                        1.0
                    } else {
                        (own_gold + un.tp) as f64 / total_gold as f64
                    };
                    Ok(Trial {
                        unannotated: (!rest.is_empty()).then(|| un.recall()),
                        all,
                        annotated: own.recall(),
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;

    let t = cfg.trials_per_ratio as f64;
    let points = cfg
        .ratios
        .iter()
        .zip(&sizes)
        .enumerate()
        .map(|(j, (&ratio, &k))| {
            let column = || results.iter().map(move |r| &r[j]);
            let un: Option<Vec<f64>> = column().map(|r| r.unannotated).collect();
            let (mean_un, sd) = match un {
                Some(v) => {
                    let m = v.iter().sum::<f64>() / t;
                    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / t;
                    (Some(m), Some(var.sqrt()))
                }
                None => (None, None),
            };
            CurvePoint {
                ratio,
                n_annotated: k,
                mean_recall_unannotated: mean_un,
                mean_recall_all: column().map(|r| r.all).sum::<f64>() / t,
                mean_recall_annotated: column().map(|r| r.annotated).sum::<f64>() / t,
                stddev: sd,
            }
        })
        .collect();
    Ok(DictCurve {
        trials_per_ratio: cfg.trials_per_ratio,
        seed: cfg.seed,
        points,
    })
}

fn dictionary_spans(dict: &DictionaryIndex<'_>, doc: &Document) -> Vec<SpanAnnotation> {
    dict.matches(doc)
        .into_iter()
        .enumerate()
        .filter_map(|(i, (s, e, label))| {
            SpanAnnotation::from_doc(doc, format!("T{}", i + 1), label, s, e, Provenance::Source("dictionary".into()))
        })
        .collect()
}
