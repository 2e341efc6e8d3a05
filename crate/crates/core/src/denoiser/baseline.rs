use super::{Tag, TagKind, TagSpace, OUTSIDE};
use crate::weak_sources::VoteGrid;

/// Per-token plurality of non-abstaining votes.
///
/// All-abstain tokens become `O`. Ties prefer a non-`O` tag, then the lower
/// tag index. The result is repaired to valid BIO.
pub fn majority_vote(grid: &VoteGrid, tags: &TagSpace) -> Vec<Tag> {
    let k = tags.len();
    let mut out = Vec::with_capacity(grid.n_tokens);
    let mut counts = vec![0usize; k];
    for t in 0..grid.n_tokens {
        counts.iter_mut().for_each(|c| *c = 0);
        for o in grid.row(t).iter().flatten() {
            if *o < k {
                counts[*o] += 1;
            }
        }
        let mut best = OUTSIDE;
        for y in 0..k {
            let better = match counts[y].cmp(&counts[best]) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => best == OUTSIDE && y != OUTSIDE,
                std::cmp::Ordering::Less => false,
            };
            if better && counts[y] > 0 {
                best = y;
            }
        }
        out.push(best);
    }
    repair_bio(&mut out, tags);
    out
}

/// Rewrites every `I-l` without a `B-l`/`I-l` predecessor to `B-l`.
pub fn repair_bio(seq: &mut [Tag], tags: &TagSpace) {
    for t in 0..seq.len() {
        if let TagKind::Inside(l) = tags.kind(seq[t]) {
            let ok = t > 0 && tags.transition_allowed(seq[t - 1], seq[t]);
            if !ok {
                seq[t] = tags.begin(l);
            }
        }
    }
}
