//! Recall of a harvested dictionary on unseen documents as the annotated
//! share of a synthetic corpus grows.
//!
//! cargo run --release --example dictionary_curve -p weaklab [-- TRIALS]

use weaklab::evaluation::{dictionary_experiment, synth_corpus, ExperimentConfig, SynthSpec};

fn main() {
    let trials = std::env::args().nth(1).map_or(100, |a| a.parse().expect("TRIALS is an integer"));
    let spec = SynthSpec {
        n_docs: 200,
        tokens_per_doc: 100,
        ..Default::default()
    };
    let corpus = synth_corpus(&spec, 0).expect("valid spec");
    let mut ratios = ExperimentConfig::ratio_range(0.05, 0.95, 0.05).expect("valid range");
    ratios.push(1.0);
    let cfg = ExperimentConfig {
        ratios,
        trials_per_ratio: trials,
        seed: 0,
        ..Default::default()
    };
    let curve = dictionary_experiment(&corpus.project, &cfg).expect("experiment");
    print!("{}", curve.to_table());
}
