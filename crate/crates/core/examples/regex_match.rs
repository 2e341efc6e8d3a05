//! Leftmost-longest regex matching over the characters of a document.
//!
//! cargo run --example regex_match -p weaklab -- '[0-9]+(\.[0-9]+)? ?(nm|C)'

use weaklab::corpus::{Document, LabelSet};
use weaklab::weak_sources::{Matcher, RegexMatch, WeakSource};

fn main() {
    let pattern = std::env::args().nth(1).unwrap_or_else(|| "[0-9]+(\\.[0-9]+)?".to_string());
    let labels = LabelSet::new(["Quantity"]);
    let doc = Document::new("d1", "Particles of 12.5 nm were annealed at 450 C for 2h.");
    let src = WeakSource::new("numbers", Matcher::RegexMatch(RegexMatch::new(&pattern, "Quantity")));
    match src.apply(&doc, &labels) {
        Ok(spans) => {
            println!("{} match(es) for {pattern:?}", spans.len());
            for s in spans {
                println!("  [{}, {}) {:?}", s.start, s.end, s.surface);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
