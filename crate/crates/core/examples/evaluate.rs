//! Score one layer against another with exact-span and token-level matching.
//!
//! cargo run --example evaluate -p weaklab

use weaklab::corpus::{Document, LabelSet, Project, Provenance, SpanAnnotation, GOLD_LAYER};
use weaklab::evaluation::{score_layers, MatchMode};

fn span(doc: &Document, id: &str, label: &str, start: usize, end: usize) -> SpanAnnotation {
    SpanAnnotation::from_doc(doc, id, label, start, end, Provenance::Manual).expect("in bounds")
}

fn main() {
    let mut project = Project::new("demo", LabelSet::new(["Material", "Number"]));
    let doc = Document::new("d1", "ZnO nano rods grown at 90 C on TiO2 seeds");
    let gold = vec![
        span(&doc, "T1", "Material", 0, 13),
        span(&doc, "T2", "Number", 23, 25),
        span(&doc, "T3", "Material", 31, 35),
    ];
    // Boundary error on the first span, a wrong label on the second.
    let pred = vec![
        span(&doc, "T1", "Material", 0, 3),
        span(&doc, "T2", "Material", 23, 25),
        span(&doc, "T3", "Material", 31, 35),
    ];
    project.add_document(doc);
    project.set_annotations("d1", GOLD_LAYER, gold);
    project.set_annotations("d1", "pred", pred);

    for mode in [MatchMode::ExactSpan, MatchMode::TokenLevel] {
        let r = score_layers(&project, "pred", GOLD_LAYER, mode).expect("layers exist");
        let s = r.micro.scores();
        println!(
            "{mode:?}: tp={} fp={} fn={}  P={:.3} R={:.3} F1={:.3}",
            r.micro.tp, r.micro.fp, r.micro.fn_, s.precision, s.recall, s.f1
        );
    }
}
