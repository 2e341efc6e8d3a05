use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Document, LabelSet, Project, Provenance, GOLD_LAYER};
use crate::denoiser::{decode_bio, Tag, TagKind, TagSpace, OUTSIDE};
use crate::weak_sources::VoteGrid;

/// A simulated labeling source: per token it abstains with `abstain`,
/// otherwise reports the gold tag with probability `accuracy` and a
/// uniformly drawn wrong tag otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    pub id: String,
    pub accuracy: f64,
    pub abstain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub tokens_per_doc: usize,
    pub labels: Vec<String>,
    /// Probability that an entity starts at a token outside an entity.
    pub span_density: f64,
    /// Probability that an entity extends by one more token.
    pub continue_prob: f64,
    pub sources: Vec<SynthSource>,
    /// Distinct surfaces per label and entity length.
    pub entity_vocab: usize,
    pub filler_vocab: usize,
    /// Zipf exponent for both surface vocabularies.
    pub zipf_exponent: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_docs: 50,
            tokens_per_doc: 200,
            labels: vec!["A".into(), "B".into(), "C".into()],
            span_density: 0.15,
            continue_prob: 0.4,
            sources: Vec::new(),
            entity_vocab: 200,
            filler_vocab: 2000,
            zipf_exponent: 1.1,
        }
    }
}

impl SynthSpec {
    pub fn with_sources(mut self, sources: &[(&str, f64, f64)]) -> Self {
        self.sources = sources
            .iter()
            .map(|&(id, accuracy, abstain)| SynthSource {
                id: id.to_string(),
                accuracy,
                abstain,
            })
            .collect();
        self
    }

    fn check(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.labels.is_empty() {
            return bad("at least one label is required".into());
        }
        if !unit(self.span_density) || !unit(self.continue_prob) {
            return bad("span_density and continue_prob must lie in [0, 1]".into());
        }
        if self.entity_vocab == 0 || self.filler_vocab == 0 {
            return bad("vocabularies must be non-empty".into());
        }
        if !(self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be non-negative".into());
        }
        for s in &self.sources {
            if !unit(s.accuracy) || !unit(s.abstain) {
                return bad(format!("source {}: accuracy and abstain must lie in [0, 1]", s.id));
            }
            if s.id.is_empty() || s.id == GOLD_LAYER {
                return bad(format!("source id {:?} is reserved", s.id));
            }
        }
        Ok(())
    }
}

/// A generated project together with the hidden quantities behind it.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Gold layer `gold` plus one layer per source id.
    pub project: Project,
    pub tags: TagSpace,
    pub gold_tags: BTreeMap<String, Vec<Tag>>,
    /// Raw per-token reports of each source, before span conversion.
    pub reports: BTreeMap<String, BTreeMap<String, Vec<Option<Tag>>>>,
}

impl SynthCorpus {
    /// Vote grids taken straight from the sources' reports, with reported
    /// `O` read as abstention. Unlike grids rebuilt from the source layers,
    /// each observation here depends only on its token's gold tag.
    pub fn report_grids(&self) -> Vec<VoteGrid> {
        let sources: Vec<String> = self.reports.keys().cloned().collect();
        self.gold_tags
            .iter()
            .map(|(id, gold)| {
                let columns: Vec<Vec<Option<Tag>>> = sources
                    .iter()
                    .map(|s| {
                        self.reports[s][id]
                            .iter()
                            .map(|o| o.filter(|&t| t != OUTSIDE))
                            .collect()
                    })
                    .collect();
                let mut g = VoteGrid::from_columns(id.clone(), sources.clone(), &columns);
                g.n_tokens = gold.len();
                g
            })
            .collect()
    }
}

/// Emission matrix `[tag][column]` implied by a [`SynthSource`] once
/// reported `O` is folded into the abstain column `K`.
pub fn generator_emission(src: &SynthSource, tags: &TagSpace) -> Vec<Vec<f64>> {
    let k = tags.len();
    let report = 1.0 - src.abstain;
    let wrong = if k > 1 { (1.0 - src.accuracy) / (k - 1) as f64 } else { 0.0 };
    (0..k)
        .map(|y| {
            let mut row: Vec<f64> = (0..k)
                .map(|o| report * if o == y { src.accuracy } else { wrong })
                .collect();
            row.push(src.abstain + row[OUTSIDE]);
            row[OUTSIDE] = 0.0;
            row
        })
        .collect()
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "da", "fu", "gi", "ho", "pe", "so", "wa",
];

fn pseudo_word(prefix: &str, mut n: usize) -> String {
    let mut w = prefix.to_string();
    loop {
        w.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break w;
        }
    }
}

/// Draws a corpus from a ground-truth BIO chain, gives every entity a
/// Zipf-distributed surface from its label's lexicon and simulates the
/// spec's sources. Deterministic in `seed`.
///
/// A source's layer is the spans of its reports when abstentions are read
/// as `O`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus, EvalError> {
    spec.check()?;
    let tags = TagSpace::new(spec.labels.iter());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entity_rank = Zipf::new(spec.entity_vocab as f64, spec.zipf_exponent).expect("checked");
    let filler_rank = Zipf::new(spec.filler_vocab as f64, spec.zipf_exponent).expect("checked");

    let mut project = Project::new("synthetic", LabelSet::new(spec.labels.iter()));
    let mut gold_tags = BTreeMap::new();
    let mut reports: BTreeMap<String, BTreeMap<String, Vec<Option<Tag>>>> = BTreeMap::new();
    let width = spec.n_docs.saturating_sub(1).to_string().len();

    for d in 0..spec.n_docs {
        let doc_id = format!("doc{d:0width$}");
        let seq = sample_tags(&tags, spec, &mut rng);
        let words = surfaces(&seq, &tags, &mut rng, &entity_rank, &filler_rank);
        let doc = Document::new(&doc_id, words.join(" "));

        let mut gold = decode_bio(&seq, &doc, &tags);
        gold.iter_mut().for_each(|s| s.provenance = Provenance::Manual);
        project.set_annotations(&doc_id, GOLD_LAYER, gold);

        for src in &spec.sources {
            let rep: Vec<Option<Tag>> = seq.iter().map(|&g| report(src, g, tags.len(), &mut rng)).collect();
            let as_tags: Vec<Tag> = rep.iter().map(|o| o.unwrap_or(OUTSIDE)).collect();
            let mut spans = decode_bio(&as_tags, &doc, &tags);
            spans
                .iter_mut()
                .for_each(|s| s.provenance = Provenance::Source(src.id.clone()));
            project.set_annotations(&doc_id, &src.id, spans);
            reports.entry(src.id.clone()).or_default().insert(doc_id.clone(), rep);
        }
        gold_tags.insert(doc_id, seq);
        project.add_document(doc);
    }
    // sources without documents still get a (empty) layer
    for src in &spec.sources {
        project.layers.entry(src.id.clone()).or_default();
    }
    project.layers.entry(GOLD_LAYER.to_string()).or_default();
    Ok(SynthCorpus {
        project,
        tags,
        gold_tags,
        reports,
    })
}

fn sample_tags(tags: &TagSpace, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Tag> {
    let n_labels = tags.labels().len();
    let mut out: Vec<Tag> = Vec::with_capacity(spec.tokens_per_doc);
    for _ in 0..spec.tokens_per_doc {
        let in_entity = match out.last().map(|&t| tags.kind(t)) {
            Some(TagKind::Begin(l) | TagKind::Inside(l)) => Some(l),
            _ => None,
        };
        let next = match in_entity {
            Some(l) if rng.random_bool(spec.continue_prob) => tags.inside(l),
            _ if rng.random_bool(spec.span_density) => tags.begin(rng.random_range(0..n_labels)),
            _ => OUTSIDE,
        };
        out.push(next);
    }
    out
}

fn surfaces(
    seq: &[Tag],
    tags: &TagSpace,
    rng: &mut ChaCha8Rng,
    entity_rank: &Zipf<f64>,
    filler_rank: &Zipf<f64>,
) -> Vec<String> {
    let mut words = Vec::with_capacity(seq.len());
    let mut t = 0;
    while t < seq.len() {
        match tags.kind(seq[t]) {
            TagKind::Begin(l) => {
                let len = 1 + seq[t + 1..]
                    .iter()
                    .take_while(|&&x| x == tags.inside(l))
                    .count();
                let rank = entity_rank.sample(rng) as usize;
                // label letters, label index, then rank, length and position:
                // one phrase per (label, length, rank), never a filler word
                let label: String = tags.labels()[l]
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .map(|c| c.to_ascii_lowercase())
                    .collect();
                let stem = pseudo_word(&format!("{label}{l}q"), rank);
                for i in 0..len {
                    words.push(pseudo_word(&format!("{stem}{len}"), i));
                }
                t += len;
            }
            _ => {
                words.push(pseudo_word("", filler_rank.sample(rng) as usize));
                t += 1;
            }
        }
    }
    words
}

fn report(src: &SynthSource, gold: Tag, k: usize, rng: &mut ChaCha8Rng) -> Option<Tag> {
    if rng.random_bool(src.abstain) {
        return None;
    }
    if k == 1 || rng.random_bool(src.accuracy) {
        return Some(gold);
    }
    let wrong = rng.random_range(0..k - 1);
    Some(if wrong >= gold { wrong + 1 } else { wrong })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::encode_bio;

    fn spec(sources: &[(&str, f64, f64)]) -> SynthSpec {
        SynthSpec {
            n_docs: 10,
            tokens_per_doc: 100,
            ..Default::default()
        }
        .with_sources(sources)
    }

    #[test]
    fn deterministic() {
        let s = spec(&[("a", 0.7, 0.3)]);
        let x = synth_corpus(&s, 5).unwrap();
        let y = synth_corpus(&s, 5).unwrap();
        assert_eq!(x.project.layers, y.project.layers);
        assert_eq!(x.reports, y.reports);
        let z = synth_corpus(&s, 6).unwrap();
        assert_ne!(x.gold_tags, z.gold_tags);
    }

    #[test]
    fn gold_layer_matches_gold_tags() {
        let c = synth_corpus(&spec(&[]), 1).unwrap();
        for (id, seq) in &c.gold_tags {
            let doc = c.project.doc(id).unwrap();
            assert_eq!(doc.tokens().len(), seq.len());
            let enc = encode_bio(c.project.annotations(id, GOLD_LAYER), doc.tokens(), &c.tags).unwrap();
            assert_eq!(&enc, seq);
        }
    }

    #[test]
    fn perfect_source_equals_gold() {
        let c = synth_corpus(&spec(&[("p", 1.0, 0.0)]), 2).unwrap();
        for id in c.project.doc_ids() {
            let key = |l: &str| {
                c.project
                    .annotations(id, l)
                    .iter()
                    .map(|s| (s.start, s.end, s.label.clone()))
                    .collect::<Vec<_>>()
            };
            assert_eq!(key("p"), key(GOLD_LAYER));
        }
    }

    #[test]
    fn zero_accuracy_never_reports_gold() {
        let c = synth_corpus(&spec(&[("z", 0.0, 0.2)]), 3).unwrap();
        for (id, rep) in &c.reports["z"] {
            for (o, g) in rep.iter().zip(&c.gold_tags[id]) {
                assert_ne!(*o, Some(*g));
            }
        }
    }

    #[test]
    fn empirical_accuracy_and_abstain_rates() {
        let s = SynthSpec {
            n_docs: 50,
            tokens_per_doc: 200,
            ..Default::default()
        }
        .with_sources(&[("a", 0.8, 0.3), ("b", 0.6, 0.1)]);
        let c = synth_corpus(&s, 11).unwrap();
        for src in &s.sources {
            let (mut n, mut reported, mut right) = (0usize, 0usize, 0usize);
            for (id, rep) in &c.reports[&src.id] {
                for (o, g) in rep.iter().zip(&c.gold_tags[id]) {
                    n += 1;
                    if let Some(o) = o {
                        reported += 1;
                        right += (o == g) as usize;
                    }
                }
            }
            assert!(n >= 10_000);
            let acc = right as f64 / reported as f64;
            let abs = 1.0 - reported as f64 / n as f64;
            assert!((acc - src.accuracy).abs() <= 0.02, "{}: {acc}", src.id);
            assert!((abs - src.abstain).abs() <= 0.02, "{}: {abs}", src.id);
        }
    }

    #[test]
    fn generator_rows_are_distributions() {
        let tags = TagSpace::new(["A", "B"]);
        let src = SynthSource { id: "s".into(), accuracy: 0.7, abstain: 0.3 };
        let e = generator_emission(&src, &tags);
        for row in &e {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[OUTSIDE], 0.0);
        }
        assert!((e[0][5] - (0.3 + 0.49)).abs() < 1e-12);
        assert!((e[1][1] - 0.49).abs() < 1e-12);
    }

    #[test]
    fn report_grids_have_no_outside() {
        let c = synth_corpus(&spec(&[("a", 0.5, 0.2), ("b", 0.9, 0.0)]), 8).unwrap();
        let grids = c.report_grids();
        assert_eq!(grids.len(), 10);
        for g in &grids {
            assert_eq!(g.sources, ["a", "b"]);
            for t in 0..g.n_tokens {
                assert!(g.row(t).iter().all(|o| *o != Some(OUTSIDE)));
            }
        }
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(synth_corpus(&spec(&[("a", 1.5, 0.0)]), 0).is_err());
        assert!(synth_corpus(&spec(&[("gold", 1.0, 0.0)]), 0).is_err());
    }

    #[test]
    fn entity_surfaces_repeat() {
        let c = synth_corpus(&spec(&[]), 4).unwrap();
        let mut seen = std::collections::BTreeMap::<&str, usize>::new();
        for spans in c.project.layer(GOLD_LAYER).unwrap().values() {
            for s in spans {
                *seen.entry(s.surface.as_str()).or_default() += 1;
            }
        }
        assert!(seen.values().any(|&n| n >= 5), "Zipf head should recur");
    }
}
