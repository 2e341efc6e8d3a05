use std::ops::ControlFlow;

use rayon::prelude::*;

use super::{decode_bio_checked, em_fit_with, viterbi, DenoiseError, FitConfig, HmmParams, TagSpace};
use crate::corpus::{Layer, Project};
use crate::weak_sources::{build_vote_grid, SourceError, VoteGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutcome {
    pub params: HmmParams,
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Decoded spans per document, ready to store as the `denoised` layer.
    pub layer: Layer,
}

/// Vote grids for every document, one column per source layer, in doc-id
/// order.
pub fn build_grids(project: &Project, source_ids: &[String], tags: &TagSpace) -> Result<Vec<VoteGrid>, DenoiseError> {
    for id in source_ids {
        if project.layer(id).is_none() {
            return Err(DenoiseError::MissingLayer(id.clone()));
        }
    }
    let docs: Vec<_> = project.documents.values().collect();
    docs.par_iter()
        .map(|doc| {
            let per_source: Vec<(&str, &[_])> = source_ids
                .iter()
                .map(|id| (id.as_str(), project.annotations(doc.id(), id)))
                .collect();
            build_vote_grid(doc, tags, &per_source).map_err(|e| match e {
                SourceError::UnknownLabel(l) => DenoiseError::UnknownLabel(l),
                other => DenoiseError::Dimension(other.to_string()),
            })
        })
        .collect()
}

/// Grids -> EM -> Viterbi -> spans for every document of the project.
pub fn denoise_corpus(project: &Project, source_ids: &[String], cfg: &FitConfig) -> Result<DenoiseOutcome, DenoiseError> {
    denoise_corpus_with(project, source_ids, cfg, |_, _| ControlFlow::Continue(()))
}

pub fn denoise_corpus_with<F>(
    project: &Project,
    source_ids: &[String],
    cfg: &FitConfig,
    on_iteration: F,
) -> Result<DenoiseOutcome, DenoiseError>
where
    F: FnMut(usize, f64) -> ControlFlow<()>,
{
    if source_ids.is_empty() {
        return Err(DenoiseError::NoSources);
    }
    let tags = TagSpace::new(project.labels.iter());
    let grids = build_grids(project, source_ids, &tags)?;
    let fit = em_fit_with(&grids, &tags, cfg, on_iteration)?;
    let layer = grids
        .par_iter()
        .map(|g| {
            let doc = &project.documents[&g.doc_id];
            let path = viterbi(&fit.params, g)?;
            let decoded = decode_bio_checked(&path, doc, &tags);
            debug_assert!(!decoded.repaired, "masked transitions produce valid BIO");
            Ok((g.doc_id.clone(), decoded.spans))
        })
        .collect::<Result<Layer, DenoiseError>>()?;
    Ok(DenoiseOutcome {
        params: fit.params,
        trace: fit.trace,
        converged: fit.converged,
        layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelSet, Provenance, SpanAnnotation};

    // every Material and Number mention is marked by source "src"
    fn project() -> Project {
        let mut p = Project::new("p", LabelSet::new(["Material", "Number"]));
        let materials = ["TiO2", "zinc oxide", "ZnO", "cerium dioxide nanorods"];
        let numbers = ["45", "300", "1 . 5"];
        for i in 0..40 {
            let m = materials[i % materials.len()];
            let n = numbers[i % numbers.len()];
            let m2 = materials[(i / 3) % materials.len()];
            let text = format!("the {m} was heated to {n} C and then mixed with {m2} in water");
            let doc = Document::new(format!("d{i:02}"), text.clone());
            let mut spans = Vec::new();
            let mut from = 0;
            for (surface, label) in [(m, "Material"), (n, "Number"), (m2, "Material")] {
                let start = text[from..].find(surface).unwrap() + from;
                let end = start + surface.len();
                spans.push(
                    SpanAnnotation::from_doc(&doc, format!("T{}", spans.len() + 1), label, start, end, Provenance::Source("src".into()))
                        .unwrap(),
                );
                from = end;
            }
            let id = doc.id().to_string();
            p.add_document(doc);
            p.set_annotations(&id, "src", spans);
        }
        p
    }

    #[test]
    fn single_perfect_source_is_recovered() {
        let p = project();
        let out = denoise_corpus(&p, &["src".to_string()], &FitConfig::default()).unwrap();
        for doc in p.doc_ids() {
            let got: Vec<_> = out.layer[doc].iter().map(|s| (s.start, s.end, s.label.clone())).collect();
            let want: Vec<_> = p.annotations(doc, "src").iter().map(|s| (s.start, s.end, s.label.clone())).collect();
            assert_eq!(got, want, "doc {doc}");
            assert!(out.layer[doc].iter().all(|s| s.provenance == Provenance::Denoiser));
        }
    }

    #[test]
    fn no_sources() {
        assert_eq!(
            denoise_corpus(&project(), &[], &FitConfig::default()).unwrap_err(),
            DenoiseError::NoSources
        );
    }

    #[test]
    fn missing_layer() {
        assert_eq!(
            denoise_corpus(&project(), &["nope".to_string()], &FitConfig::default()).unwrap_err(),
            DenoiseError::MissingLayer("nope".into())
        );
    }
}
