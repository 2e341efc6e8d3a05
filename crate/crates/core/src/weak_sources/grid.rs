use serde::{Deserialize, Serialize};

use super::SourceError;
use crate::corpus::{align_span, Document, SpanAnnotation};
use crate::denoiser::{Tag, TagSpace};

/// Token x source observations. `None` means the source abstained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteGrid {
    pub doc_id: String,
    pub n_tokens: usize,
    pub sources: Vec<String>,
    // row-major, n_tokens * sources.len()
    obs: Vec<Option<Tag>>,
}

impl VoteGrid {
    /// All-abstain grid.
    pub fn empty(doc_id: impl Into<String>, n_tokens: usize, sources: Vec<String>) -> Self {
        let n = n_tokens * sources.len();
        VoteGrid {
            doc_id: doc_id.into(),
            n_tokens,
            sources,
            obs: vec![None; n],
        }
    }

    /// Builds a grid from per-source columns.
    pub fn from_columns(doc_id: impl Into<String>, sources: Vec<String>, columns: &[Vec<Option<Tag>>]) -> Self {
        assert_eq!(sources.len(), columns.len());
        let n_tokens = columns.first().map_or(0, Vec::len);
        let mut g = VoteGrid::empty(doc_id, n_tokens, sources);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n_tokens, "columns must have equal length");
            for (t, &o) in col.iter().enumerate() {
                g.set(t, j, o);
            }
        }
        g
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn get(&self, t: usize, j: usize) -> Option<Tag> {
        self.obs[t * self.sources.len() + j]
    }

    pub fn set(&mut self, t: usize, j: usize, o: Option<Tag>) {
        let n = self.sources.len();
        self.obs[t * n + j] = o;
    }

    /// Observations of all sources at token `t`.
    pub fn row(&self, t: usize) -> &[Option<Tag>] {
        let n = self.sources.len();
        &self.obs[t * n..(t + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<Option<Tag>> {
        (0..self.n_tokens).map(|t| self.get(t, j)).collect()
    }
}

/// Encodes each source's spans as `B-l, I-l, ...` over the tokens they
/// cover; uncovered tokens are abstentions, never `O`.
///
/// Spans cutting through tokens expand to whole tokens. A span that would
/// reuse a token already claimed by an earlier span of the same source is
/// dropped, as is a span covering no token.
pub fn build_vote_grid(
    doc: &Document,
    tags: &TagSpace,
    per_source: &[(&str, &[SpanAnnotation])],
) -> Result<VoteGrid, SourceError> {
    let sources = per_source.iter().map(|(id, _)| id.to_string()).collect();
    let mut grid = VoteGrid::empty(doc.id(), doc.tokens().len(), sources);
    for (j, (_, spans)) in per_source.iter().enumerate() {
        let mut ordered: Vec<&SpanAnnotation> = spans.iter().collect();
        ordered.sort_by_key(|s| (s.start, s.end));
        for span in ordered {
            let label = tags
                .label_index(&span.label)
                .ok_or_else(|| SourceError::UnknownLabel(span.label.clone()))?;
            let Ok(range) = align_span(span, doc.tokens()) else {
                continue;
            };
            if (range.start..range.end).any(|t| grid.get(t, j).is_some()) {
                continue;
            }
            for t in range.start..range.end {
                let tag = if t == range.start {
                    tags.begin(label)
                } else {
                    tags.inside(label)
                };
                grid.set(t, j, Some(tag));
            }
        }
    }
    Ok(grid)
}
