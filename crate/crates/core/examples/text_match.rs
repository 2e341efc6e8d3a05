//! Literal substring matching as a weak source. Matches need not sit on
//! token boundaries (see the `TiO2x` hit).
//!
//! cargo run --example text_match -p weaklab

use weaklab::corpus::{Document, LabelSet};
use weaklab::weak_sources::{Matcher, TextMatch, WeakSource};

fn main() {
    let labels = LabelSet::new(["Material"]);
    let doc = Document::new("d1", "Anatase TiO2, rutile tio2, TiO2-based films and TiO2x.");
    for case_sensitive in [true, false] {
        let src = WeakSource::new("tio2", Matcher::TextMatch(TextMatch::new("TiO2", "Material", case_sensitive)));
        let spans = src.apply(&doc, &labels).expect("valid source");
        println!("case_sensitive={case_sensitive}:");
        for s in spans {
            println!("  {} [{}, {}) {:?}", s.label, s.start, s.end, s.surface);
        }
    }
}
