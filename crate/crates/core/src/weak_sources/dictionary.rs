use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text_match::{default_true, slice_eq};
use crate::corpus::{tokenize, Document, Layer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub surface: String,
    pub label: String,
    pub support: u32,
}

/// Surface -> label lexicon harvested from annotated documents.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dictionary {
    pub entries: Vec<DictionaryEntry>,
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
}

/// What to do with a surface annotated with more than one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConflictPolicy {
    /// Keep the most frequent label, ties to the lexicographically smaller.
    #[default]
    MostFrequent,
    /// Leave ambiguous surfaces out of the dictionary.
    DropAmbiguous,
}

/// Builds a dictionary from the gold annotations of `docs`.
pub fn build_dictionary(gold: &Layer, docs: &[&str], policy: ConflictPolicy) -> Dictionary {
    let mut counts: BTreeMap<&str, BTreeMap<&str, u32>> = BTreeMap::new();
    for doc in docs {
        let Some(anns) = gold.get(*doc) else { continue };
        for a in anns {
            *counts
                .entry(a.surface.as_str())
                .or_default()
                .entry(a.label.as_str())
                .or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .filter_map(|(surface, labels)| {
            if policy == ConflictPolicy::DropAmbiguous && labels.len() > 1 {
                return None;
            }
            // BTreeMap iterates labels in ascending order, so the first
            // maximum is the lexicographically smallest
            let (label, support) = labels
                .into_iter()
                .fold(None::<(&str, u32)>, |best, (l, c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((l, c)),
                })?;
            Some(DictionaryEntry {
                surface: surface.to_string(),
                label: label.to_string(),
                support,
            })
        })
        .collect();
    Dictionary {
        entries,
        case_sensitive: true,
    }
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&DictionaryEntry> {
        self.entries.iter().find(|e| e.surface == surface)
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.surface.is_empty() {
                return Err("empty dictionary surface".into());
            }
            if e.support == 0 {
                return Err(format!("entry {:?} has zero support", e.surface));
            }
            let key = self.key(&e.surface);
            if !seen.insert(key) {
                return Err(format!("duplicate dictionary surface {:?}", e.surface));
            }
        }
        Ok(())
    }

    fn key(&self, s: &str) -> String {
        if self.case_sensitive {
            s.to_string()
        } else {
            s.to_lowercase()
        }
    }

    /// Token-aligned matches of every entry. At overlaps longer surfaces win,
    /// then higher support, then the smaller start offset.
    pub fn matches(&self, doc: &Document) -> Vec<(usize, usize, String)> {
        self.index().matches(doc)
    }

    /// Lookup structure for matching many documents against one dictionary.
    pub fn index(&self) -> DictionaryIndex<'_> {
        let mut by_first: HashMap<String, Vec<(usize, Vec<char>)>> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            let surface: Vec<char> = e.surface.chars().collect();
            match tokenize(&e.surface).first() {
                Some(t) if t.start == 0 => {
                    let first: String = surface[t.start..t.end].iter().collect();
                    by_first.entry(self.key(&first)).or_default().push((i, surface));
                }
                _ => {}
            }
        }
        DictionaryIndex { dict: self, by_first }
    }
}

/// A [`Dictionary`] with its entries keyed by their first token.
#[derive(Debug)]
pub struct DictionaryIndex<'a> {
    dict: &'a Dictionary,
    by_first: HashMap<String, Vec<(usize, Vec<char>)>>,
}

impl DictionaryIndex<'_> {
    /// Same as [`Dictionary::matches`].
    pub fn matches(&self, doc: &Document) -> Vec<(usize, usize, String)> {
        let dict = self.dict;
        let tokens = doc.tokens();
        let chars = doc.chars();
        if tokens.is_empty() || self.by_first.is_empty() {
            return Vec::new();
        }
        let token_end_at: HashSet<usize> = tokens.iter().map(|t| t.end).collect();
        // occurrences per entry in left-to-right order
        let mut per_entry: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for tok in tokens {
            let surface = doc.token_surface(*tok);
            let cands = if dict.case_sensitive {
                self.by_first.get(surface)
            } else {
                self.by_first.get(&surface.to_lowercase())
            };
            let Some(cands) = cands else { continue };
            for (idx, surface) in cands {
                let end = tok.start + surface.len();
                if end > chars.len() || !token_end_at.contains(&end) {
                    continue;
                }
                if !slice_eq(&chars[tok.start..end], surface, dict.case_sensitive) {
                    continue;
                }
                let occ = per_entry.entry(*idx).or_default();
                if occ.last().is_none_or(|&(_, e)| e <= tok.start) {
                    occ.push((tok.start, end));
                }
            }
        }

        let mut candidates: Vec<(usize, usize, usize)> = per_entry
            .into_iter()
            .flat_map(|(i, occ)| occ.into_iter().map(move |(s, e)| (i, s, e)))
            .collect();
        candidates.sort_by(|a, b| {
            let (ea, eb) = (&dict.entries[a.0], &dict.entries[b.0]);
            (b.2 - b.1)
                .cmp(&(a.2 - a.1))
                .then(eb.support.cmp(&ea.support))
                .then(a.1.cmp(&b.1))
                .then(ea.label.cmp(&eb.label))
                .then(a.0.cmp(&b.0))
        });
        let mut taken = vec![false; chars.len()];
        let mut out = Vec::new();
        for (i, s, e) in candidates {
            if taken[s..e].iter().any(|&t| t) {
                continue;
            }
            taken[s..e].iter_mut().for_each(|t| *t = true);
            out.push((s, e, dict.entries[i].label.clone()));
        }
        out.sort_unstable();
        out
    }
}
