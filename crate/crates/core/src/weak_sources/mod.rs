//! Weak labeling sources: raw text match, regular expressions, declarative
//! labeling rules and dictionaries, plus the conversion of their output into
//! per-token vote grids.

mod dictionary;
mod grid;
mod overlap;
pub mod regex;
mod rule;
mod text_match;

pub use dictionary::{build_dictionary, ConflictPolicy, Dictionary, DictionaryEntry, DictionaryIndex};
pub use grid::{build_vote_grid, VoteGrid};
pub use overlap::resolve_overlaps;
pub use regex::{Pattern, PatternError};
pub use rule::{Rule, TriggerMatcher};
pub use text_match::TextMatch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, LabelSet, Provenance, SpanAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    PatternSyntax(#[from] PatternError),
    #[error("invalid source {id:?}: {reason}")]
    InvalidSource { id: String, reason: String },
}

/// A regular expression source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexMatch {
    pub pattern: String,
    pub label: String,
}

impl RegexMatch {
    pub fn new(pattern: impl Into<String>, label: impl Into<String>) -> Self {
        RegexMatch {
            pattern: pattern.into(),
            label: label.into(),
        }
    }

    /// Leftmost-longest, non-overlapping matches as (start, end, label).
    pub fn matches(&self, doc: &Document) -> Result<Vec<(usize, usize, String)>, SourceError> {
        let pattern = Pattern::new(&self.pattern)?;
        Ok(pattern
            .find_iter(doc.chars())
            .into_iter()
            .map(|(s, e)| (s, e, self.label.clone()))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Matcher {
    TextMatch(TextMatch),
    RegexMatch(RegexMatch),
    Rule(Rule),
    Dictionary(Dictionary),
}

/// A named, prioritized weak labeling source as stored in `sources.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSource {
    pub id: String,
    #[serde(flatten)]
    pub matcher: Matcher,
    /// Larger wins when overlapping outputs of different sources are merged.
    #[serde(default)]
    pub priority: i64,
}

impl WeakSource {
    pub fn new(id: impl Into<String>, matcher: Matcher) -> Self {
        WeakSource {
            id: id.into(),
            matcher,
            priority: 0,
        }
    }

    pub fn with_priority(mut self, priority: i64) -> Self {
        self.priority = priority;
        self
    }

    fn labels(&self) -> Vec<&str> {
        match &self.matcher {
            Matcher::TextMatch(m) => vec![m.label.as_str()],
            Matcher::RegexMatch(m) => vec![m.label.as_str()],
            Matcher::Rule(r) => std::iter::once(r.label_if_cue.as_str())
                .chain(r.label_otherwise.as_deref())
                .collect(),
            Matcher::Dictionary(d) => d.entries.iter().map(|e| e.label.as_str()).collect(),
        }
    }

    /// Checks that the payload compiles and every label it emits is known.
    pub fn validate(&self, labels: &LabelSet) -> Result<(), SourceError> {
        if self.id.is_empty() {
            return Err(self.invalid("empty id"));
        }
        if self.id.contains(['/', '\\']) || self.id == "." || self.id == ".." {
            return Err(self.invalid("id must be usable as a directory name"));
        }
        for l in self.labels() {
            if !labels.contains(l) {
                return Err(SourceError::UnknownLabel(l.to_string()));
            }
        }
        match &self.matcher {
            Matcher::TextMatch(m) if m.query.is_empty() => Err(self.invalid("empty query")),
            Matcher::TextMatch(_) => Ok(()),
            Matcher::RegexMatch(m) => Pattern::new(&m.pattern).map(|_| ()).map_err(Into::into),
            Matcher::Rule(r) => r.check().map_err(|reason| self.invalid(reason)),
            Matcher::Dictionary(d) => d.check().map_err(|reason| self.invalid(reason)),
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> SourceError {
        SourceError::InvalidSource {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    /// Applies the source to one document. Spans carry `Source(id)`
    /// provenance, are sorted by start and never overlap.
    pub fn apply(&self, doc: &Document, labels: &LabelSet) -> Result<Vec<SpanAnnotation>, SourceError> {
        self.validate(labels)?;
        let raw = match &self.matcher {
            Matcher::TextMatch(m) => m.matches(doc),
            Matcher::RegexMatch(m) => m.matches(doc)?,
            Matcher::Rule(r) => r.matches(doc)?,
            Matcher::Dictionary(d) => d.matches(doc),
        };
        Ok(to_spans(doc, &self.id, raw))
    }
}

fn to_spans(doc: &Document, source_id: &str, raw: Vec<(usize, usize, String)>) -> Vec<SpanAnnotation> {
    raw.into_iter()
        .enumerate()
        .filter_map(|(i, (s, e, label))| {
            SpanAnnotation::from_doc(
                doc,
                format!("T{}", i + 1),
                label,
                s,
                e,
                Provenance::Source(source_id.to_string()),
            )
        })
        .collect()
}
