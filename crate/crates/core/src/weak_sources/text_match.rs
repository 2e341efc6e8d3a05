use serde::{Deserialize, Serialize};

use crate::corpus::Document;

/// Literal text search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextMatch {
    pub query: String,
    pub label: String,
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
}

pub(crate) fn default_true() -> bool {
    true
}

impl TextMatch {
    pub fn new(query: impl Into<String>, label: impl Into<String>, case_sensitive: bool) -> Self {
        TextMatch {
            query: query.into(),
            label: label.into(),
            case_sensitive,
        }
    }

    /// Non-overlapping occurrences scanned left to right; after a match at
    /// `s..e` the scan resumes at `e`.
    pub fn matches(&self, doc: &Document) -> Vec<(usize, usize, String)> {
        find_literal(doc.chars(), &self.query, self.case_sensitive)
            .into_iter()
            .map(|(s, e)| (s, e, self.label.clone()))
            .collect()
    }
}

pub(crate) fn chars_eq(a: char, b: char, case_sensitive: bool) -> bool {
    a == b || (!case_sensitive && a.to_lowercase().eq(b.to_lowercase()))
}

pub(crate) fn slice_eq(hay: &[char], needle: &[char], case_sensitive: bool) -> bool {
    hay.len() == needle.len()
        && hay
            .iter()
            .zip(needle)
            .all(|(&a, &b)| chars_eq(a, b, case_sensitive))
}

pub(crate) fn find_literal(hay: &[char], query: &str, case_sensitive: bool) -> Vec<(usize, usize)> {
    let needle: Vec<char> = query.chars().collect();
    let mut out = Vec::new();
    if needle.is_empty() || needle.len() > hay.len() {
        return out;
    }
    let mut pos = 0;
    while pos + needle.len() <= hay.len() {
        if slice_eq(&hay[pos..pos + needle.len()], &needle, case_sensitive) {
            out.push((pos, pos + needle.len()));
            pos += needle.len();
        } else {
            pos += 1;
        }
    }
    out
}
