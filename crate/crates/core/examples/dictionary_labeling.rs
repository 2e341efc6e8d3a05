//! Harvest a surface dictionary from gold annotations of some documents and
//! label the rest with it.
//!
//! cargo run --release --example dictionary_labeling -p weaklab

use weaklab::corpus::{LabelSet, GOLD_LAYER};
use weaklab::evaluation::{score_spans, synth_corpus, MatchCounts, MatchMode, SynthSpec};
use weaklab::weak_sources::{build_dictionary, ConflictPolicy, Matcher, WeakSource};

fn main() {
    let spec = SynthSpec {
        n_docs: 100,
        ..SynthSpec::default()
    };
    let project = synth_corpus(&spec, 7).expect("valid spec").project;
    let ids: Vec<&str> = project.doc_ids().collect();
    let (train, test) = ids.split_at(ids.len() / 2);
    let gold = project.layer(GOLD_LAYER).expect("gold layer");
    let labels: LabelSet = project.labels.clone();

    for policy in [ConflictPolicy::MostFrequent, ConflictPolicy::DropAmbiguous] {
        let dict = build_dictionary(gold, train, policy);
        let src = WeakSource::new("dict", Matcher::Dictionary(dict.clone()));
        let mut total = MatchCounts::default();
        for id in test {
            let doc = project.doc(id).unwrap();
            let pred = src.apply(doc, &labels).expect("dictionary labels come from gold");
            let counts = score_spans(&pred, project.annotations(id, GOLD_LAYER), MatchMode::ExactSpan, doc.tokens())
                .expect("non-overlapping");
            total.add(&counts);
        }
        let s = total.scores();
        println!(
            "{policy:?}: {} entries, P={:.3} R={:.3} F1={:.3} on {} held-out docs",
            dict.len(),
            s.precision,
            s.recall,
            s.f1,
            test.len()
        );
    }
}
