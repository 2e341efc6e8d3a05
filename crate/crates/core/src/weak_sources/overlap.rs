use std::cmp::Reverse;
use std::collections::BTreeMap;

use crate::corpus::{renumber, SpanAnnotation};

/// Greedy merge of candidate spans from several sources into one
/// non-overlapping layer.
///
/// Candidates are visited by (priority desc, length desc, start asc, label
/// asc) and kept when they overlap nothing kept so far. The key is made total
/// with end, provenance and id, so the result does not depend on input order.
/// Output is sorted by start and renumbered `T1..Tn`.
pub fn resolve_overlaps(mut candidates: Vec<(SpanAnnotation, i64)>) -> Vec<SpanAnnotation> {
    candidates.sort_by(|(a, pa), (b, pb)| {
        (Reverse(*pa), Reverse(a.len()), a.start, &a.label, a.end, &a.provenance, &a.id).cmp(&(
            Reverse(*pb),
            Reverse(b.len()),
            b.start,
            &b.label,
            b.end,
            &b.provenance,
            &b.id,
        ))
    });
    // kept intervals keyed by start
    let mut kept: BTreeMap<usize, SpanAnnotation> = BTreeMap::new();
    for (span, _) in candidates {
        if span.is_empty() {
            continue;
        }
        let left_clear = kept
            .range(..span.end)
            .next_back()
            .is_none_or(|(_, k)| k.end <= span.start);
        if left_clear {
            kept.insert(span.start, span);
        }
    }
    let mut out: Vec<SpanAnnotation> = kept.into_values().collect();
    renumber(&mut out);
    out
}
