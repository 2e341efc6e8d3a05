//! A context rule: "spring" is a device only when a cue word is nearby.
//!
//! cargo run --example spring_rule -p weaklab

use weaklab::corpus::{Document, LabelSet};
use weaklab::weak_sources::{Matcher, Rule, WeakSource};

fn main() {
    let labels = LabelSet::new(["Device"]);
    let rule = Rule {
        trigger: "spring".into(),
        trigger_is_regex: false,
        case_sensitive: false,
        window: 3,
        positive_cues: ["stiffness", "compressed", "coil"].map(String::from).into(),
        negative_cues: ["season", "water"].map(String::from).into(),
        label_if_cue: "Device".into(),
        label_otherwise: None,
    };
    let src = WeakSource::new("spring", Matcher::Rule(rule));
    let texts = [
        "The coil spring was compressed by 2 mm.",
        "In spring the samples were collected.",
        "Spring water, compressed in a coil.",
        "A spring of known stiffness.",
    ];
    for (i, text) in texts.iter().enumerate() {
        let doc = Document::new(format!("d{i}"), *text);
        let spans = src.apply(&doc, &labels).expect("valid rule");
        let tag = if spans.is_empty() { "abstain" } else { "Device" };
        println!("{tag:<8} {text}");
    }
}
