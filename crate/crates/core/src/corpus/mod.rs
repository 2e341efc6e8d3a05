//! Documents, tokens, span annotations and projects.
//!
//! All offsets are counted in Unicode scalar values (`char`s), never bytes.
//! A [`Document`] keeps a char-to-byte table so slicing by char offsets is
//! constant time.

mod brat;
mod validate;

pub use brat::{parse_ann, parse_ann_with, serialize_ann, AnnError, OffsetUnit, ParsedAnn};
pub use validate::{validate, Violation, ViolationKind};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gold annotation layer, stored as `<name>.ann` next to the text.
pub const GOLD_LAYER: &str = "gold";
/// Human corrections / accepted suggestions.
pub const MANUAL_LAYER: &str = "manual";
/// Output of the HMM denoiser.
pub const DENOISED_LAYER: &str = "denoised";
/// Prefix for layers written by an external model server.
pub const MODEL_LAYER_PREFIX: &str = "model:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Splits text into maximal runs of letters-or-digits, plus one token per
/// other non-whitespace character. Whitespace never produces a token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut pos = 0;
    for c in text.chars() {
        if c.is_alphanumeric() {
            run_start.get_or_insert(pos);
        } else {
            if let Some(start) = run_start.take() {
                tokens.push(Token { start, end: pos });
            }
            if !c.is_whitespace() {
                tokens.push(Token {
                    start: pos,
                    end: pos + 1,
                });
            }
        }
        pos += 1;
    }
    if let Some(start) = run_start {
        tokens.push(Token { start, end: pos });
    }
    tokens
}

/// Immutable document text with its derived token list.
#[derive(Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    text: String,
    chars: Vec<char>,
    // byte offset of every char, plus text.len() at the end
    byte_offsets: Vec<usize>,
    tokens: Vec<Token>,
}

impl fmt::Debug for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Document")
            .field("id", &self.id)
            .field("chars", &self.chars.len())
            .field("tokens", &self.tokens.len())
            .finish()
    }
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut chars = Vec::with_capacity(text.len());
        let mut byte_offsets = Vec::with_capacity(text.len() + 1);
        for (b, c) in text.char_indices() {
            chars.push(c);
            byte_offsets.push(b);
        }
        byte_offsets.push(text.len());
        let tokens = tokenize(&text);
        Document {
            id: id.into(),
            text,
            chars,
            byte_offsets,
            tokens,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Length in chars.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Text between two char offsets, or `None` when out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> Option<&str> {
        if start > end || end > self.chars.len() {
            return None;
        }
        Some(&self.text[self.byte_offsets[start]..self.byte_offsets[end]])
    }

    pub fn token_surface(&self, token: Token) -> &str {
        self.slice(token.start, token.end).unwrap_or("")
    }

    /// Converts a byte offset to a char offset; `None` if it does not fall on
    /// a char boundary.
    pub fn byte_to_char(&self, byte: usize) -> Option<usize> {
        self.byte_offsets.binary_search(&byte).ok()
    }
}

/// Where an annotation came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Provenance {
    Manual,
    Source(String),
    Model(String),
    Denoiser,
}

impl Provenance {
    /// The provenance implied by the layer an annotation is stored in.
    pub fn for_layer(layer: &str) -> Provenance {
        match layer {
            GOLD_LAYER | MANUAL_LAYER => Provenance::Manual,
            DENOISED_LAYER => Provenance::Denoiser,
            _ => match layer.strip_prefix(MODEL_LAYER_PREFIX) {
                Some(name) => Provenance::Model(name.to_string()),
                None => Provenance::Source(layer.to_string()),
            },
        }
    }
}

/// A labeled character interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub id: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub provenance: Provenance,
}

impl SpanAnnotation {
    /// Builds an annotation whose surface is taken from `doc`. Returns `None`
    /// for empty or out-of-bounds ranges.
    pub fn from_doc(
        doc: &Document,
        id: impl Into<String>,
        label: impl Into<String>,
        start: usize,
        end: usize,
        provenance: Provenance,
    ) -> Option<Self> {
        if start >= end {
            return None;
        }
        let surface = doc.slice(start, end)?.to_string();
        Some(SpanAnnotation {
            id: id.into(),
            label: label.into(),
            start,
            end,
            surface,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &SpanAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Numeric part of a `T<n>` id.
    pub fn id_number(&self) -> Option<u64> {
        parse_t_id(&self.id)
    }
}

/// The number of a Brat text-bound id such as `T12`.
pub fn parse_t_id(id: &str) -> Option<u64> {
    let digits = id.strip_prefix('T')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<u64>().ok().filter(|&n| n > 0)
}

/// Sort key used everywhere a canonical annotation order is needed.
pub fn sort_spans(spans: &mut [SpanAnnotation]) {
    spans.sort_by(|a, b| {
        (a.start, a.end, &a.label, a.id_number()).cmp(&(b.start, b.end, &b.label, b.id_number()))
    });
}

/// Assigns `T1..Tn` in the current order.
pub fn renumber(spans: &mut [SpanAnnotation]) {
    for (i, s) in spans.iter_mut().enumerate() {
        s.id = format!("T{}", i + 1);
    }
}

/// True when no two spans share a character.
pub fn is_non_overlapping(spans: &[SpanAnnotation]) -> bool {
    let mut sorted: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    sorted.sort_unstable();
    sorted.windows(2).all(|w| w[0].1 <= w[1].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRange {
    pub start: usize,
    pub end: usize,
    /// The span's boundaries did not coincide with token boundaries.
    pub boundary_adjusted: bool,
}

impl TokenRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("span {start}..{end} covers no token")]
    EmptyCoverage { start: usize, end: usize },
}

/// Minimal contiguous token range covering the characters of `start..end`.
/// Spans cutting through a token expand to the whole token.
pub fn align_offsets(start: usize, end: usize, tokens: &[Token]) -> Result<TokenRange, AlignError> {
    let first = tokens.partition_point(|t| t.end <= start);
    let last = tokens.partition_point(|t| t.start < end);
    if first >= last {
        return Err(AlignError::EmptyCoverage { start, end });
    }
    let boundary_adjusted = tokens[first].start != start || tokens[last - 1].end != end;
    Ok(TokenRange {
        start: first,
        end: last,
        boundary_adjusted,
    })
}

pub fn align_span(span: &SpanAnnotation, tokens: &[Token]) -> Result<TokenRange, AlignError> {
    align_offsets(span.start, span.end, tokens)
}

/// The project's label inventory. Labels introduced by a model server are
/// tracked separately so they can be shown as such.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub model_labels: BTreeSet<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelSet {
            labels: labels.into_iter().map(Into::into).collect(),
            model_labels: BTreeSet::new(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn insert(&mut self, label: impl Into<String>) -> bool {
        self.labels.insert(label.into())
    }

    /// Adds a label reported by a model server. Returns true if it was new.
    pub fn insert_from_model(&mut self, label: &str) -> bool {
        if self.labels.insert(label.to_string()) {
            self.model_labels.insert(label.to_string());
            true
        } else {
            false
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Annotations of one layer, keyed by document id.
pub type Layer = BTreeMap<String, Vec<SpanAnnotation>>;

#[derive(Debug, Clone, Default)]
pub struct Project {
    pub name: String,
    pub labels: LabelSet,
    pub documents: BTreeMap<String, Document>,
    pub layers: BTreeMap<String, Layer>,
}

impl Project {
    pub fn new(name: impl Into<String>, labels: LabelSet) -> Self {
        Project {
            name: name.into(),
            labels,
            ..Default::default()
        }
    }

    pub fn add_document(&mut self, doc: Document) {
        self.documents.insert(doc.id().to_string(), doc);
    }

    pub fn doc(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn layer(&self, layer: &str) -> Option<&Layer> {
        self.layers.get(layer)
    }

    /// Annotations of `doc` in `layer`; empty when either is missing.
    pub fn annotations(&self, doc: &str, layer: &str) -> &[SpanAnnotation] {
        self.layers
            .get(layer)
            .and_then(|l| l.get(doc))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn set_annotations(&mut self, doc: &str, layer: &str, anns: Vec<SpanAnnotation>) {
        self.layers
            .entry(layer.to_string())
            .or_default()
            .insert(doc.to_string(), anns);
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.documents.keys().map(String::as_str)
    }
}
