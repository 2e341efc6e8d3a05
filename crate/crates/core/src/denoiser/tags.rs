//! BIO tag space and span <-> tag conversion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DenoiseError;
use crate::corpus::{align_span, Document, Provenance, SpanAnnotation, Token};

/// Index into a [`TagSpace`].
pub type Tag = usize;

/// The outside tag always has index 0.
pub const OUTSIDE: Tag = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// `[O, B-l1, I-l1, B-l2, I-l2, ...]` over an ordered label list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TagSpace {
    fn from(labels: Vec<String>) -> Self {
        TagSpace::new(labels)
    }
}

impl From<TagSpace> for Vec<String> {
    fn from(ts: TagSpace) -> Self {
        ts.labels
    }
}

impl TagSpace {
    /// Duplicate labels are dropped, keeping the first occurrence.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for l in labels {
            let l = l.into();
            if !index.contains_key(&l) {
                index.insert(l.clone(), out.len());
                out.push(l);
            }
        }
        TagSpace { labels: out, index }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of tags, `1 + 2 * labels`.
    pub fn len(&self) -> usize {
        1 + 2 * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn begin(&self, label_idx: usize) -> Tag {
        1 + 2 * label_idx
    }

    pub fn inside(&self, label_idx: usize) -> Tag {
        2 + 2 * label_idx
    }

    pub fn kind(&self, tag: Tag) -> TagKind {
        match tag {
            0 => TagKind::Outside,
            t if t % 2 == 1 => TagKind::Begin((t - 1) / 2),
            t => TagKind::Inside((t - 2) / 2),
        }
    }

    pub fn label_of(&self, tag: Tag) -> Option<&str> {
        match self.kind(tag) {
            TagKind::Outside => None,
            TagKind::Begin(l) | TagKind::Inside(l) => Some(&self.labels[l]),
        }
    }

    pub fn name(&self, tag: Tag) -> String {
        match self.kind(tag) {
            TagKind::Outside => "O".to_string(),
            TagKind::Begin(l) => format!("B-{}", self.labels[l]),
            TagKind::Inside(l) => format!("I-{}", self.labels[l]),
        }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.len()).map(|t| self.name(t)).collect()
    }

    pub fn parse(&self, name: &str) -> Option<Tag> {
        if name == "O" {
            return Some(OUTSIDE);
        }
        let (prefix, label) = name.split_once('-')?;
        let l = self.label_index(label)?;
        match prefix {
            "B" => Some(self.begin(l)),
            "I" => Some(self.inside(l)),
            _ => None,
        }
    }

    /// BIO validity of `from -> to`: `I-l` may only follow `B-l` or `I-l`.
    pub fn transition_allowed(&self, from: Tag, to: Tag) -> bool {
        match self.kind(to) {
            TagKind::Inside(l) => {
                matches!(self.kind(from), TagKind::Begin(m) | TagKind::Inside(m) if m == l)
            }
            _ => true,
        }
    }

    pub fn start_allowed(&self, tag: Tag) -> bool {
        !matches!(self.kind(tag), TagKind::Inside(_))
    }

    /// True when the sequence is valid BIO without repair.
    pub fn is_valid_sequence(&self, tags: &[Tag]) -> bool {
        match tags.first() {
            None => true,
            Some(&first) => {
                self.start_allowed(first)
                    && tags.windows(2).all(|w| self.transition_allowed(w[0], w[1]))
            }
        }
    }
}

/// Tags covered tokens `B-l, I-l, ...` and everything else `O`.
pub fn encode_bio(
    spans: &[SpanAnnotation],
    tokens: &[Token],
    tags: &TagSpace,
) -> Result<Vec<Tag>, DenoiseError> {
    let mut out = vec![OUTSIDE; tokens.len()];
    let mut covered = vec![false; tokens.len()];
    for span in spans {
        let label = tags
            .label_index(&span.label)
            .ok_or_else(|| DenoiseError::UnknownLabel(span.label.clone()))?;
        let Ok(range) = align_span(span, tokens) else {
            continue;
        };
        if covered[range.start..range.end].iter().any(|&c| c) {
            return Err(DenoiseError::Overlap {
                start: span.start,
                end: span.end,
            });
        }
        for t in range.start..range.end {
            covered[t] = true;
            out[t] = if t == range.start {
                tags.begin(label)
            } else {
                tags.inside(label)
            };
        }
    }
    Ok(out)
}

/// Result of [`decode_bio_checked`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub spans: Vec<SpanAnnotation>,
    /// At least one `I-l` had no compatible predecessor.
    pub repaired: bool,
}

/// Decodes BIO tags into spans, treating an orphan `I-l` as `B-l`.
pub fn decode_bio(tags: &[Tag], doc: &Document, space: &TagSpace) -> Vec<SpanAnnotation> {
    decode_bio_checked(tags, doc, space).spans
}

pub fn decode_bio_checked(tags: &[Tag], doc: &Document, space: &TagSpace) -> Decoded {
    let tokens = doc.tokens();
    assert_eq!(tags.len(), tokens.len(), "tag sequence length must equal token count");
    let mut runs: Vec<(usize, usize, usize)> = Vec::new(); // (label, first token, last token)
    let mut repaired = false;
    let mut open: Option<(usize, usize, usize)> = None;
    for (t, &tag) in tags.iter().enumerate() {
        match space.kind(tag) {
            TagKind::Outside => {
                runs.extend(open.take());
            }
            TagKind::Begin(l) => {
                runs.extend(open.take());
                open = Some((l, t, t));
            }
            TagKind::Inside(l) => match open {
                Some((ol, s, _)) if ol == l => open = Some((l, s, t)),
                _ => {
                    repaired = true;
                    runs.extend(open.take());
                    open = Some((l, t, t));
                }
            },
        }
    }
    runs.extend(open);
    let spans = runs
        .into_iter()
        .enumerate()
        .map(|(i, (l, a, b))| {
            SpanAnnotation::from_doc(
                doc,
                format!("T{}", i + 1),
                space.labels()[l].clone(),
                tokens[a].start,
                tokens[b].end,
                Provenance::Denoiser,
            )
            .expect("token offsets are in bounds")
        })
        .collect();
    Decoded { spans, repaired }
}
