//! Fit the multi-source HMM on a synthetic corpus with three noisy sources
//! and compare it with each source and with majority vote.
//!
//! cargo run --release --example hmm_denoise -p weaklab

use weaklab::corpus::GOLD_LAYER;
use weaklab::denoiser::{em_fit, FitConfig};
use weaklab::evaluation::{confusion_counts, denoising_experiment, generator_emission, synth_corpus, SynthSpec};

fn main() {
    let spec = SynthSpec::default().with_sources(&[("s1", 0.8, 0.3), ("s2", 0.7, 0.3), ("s3", 0.6, 0.3)]);
    let corpus = synth_corpus(&spec, 0).expect("valid spec");
    let sources: Vec<String> = spec.sources.iter().map(|s| s.id.clone()).collect();
    let run = denoising_experiment(&corpus.project, &sources, &FitConfig::default(), GOLD_LAYER).expect("denoise");

    println!("EM iterations: {} (converged: {})", run.report.trace.len(), run.report.converged);
    println!("{:<14} {:>8} {:>8} {:>8} {:>10}", "layer", "P", "R", "F1", "token acc");
    for r in &run.report.rows {
        println!(
            "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
            r.layer, r.exact.precision, r.exact.recall, r.exact.f1, r.token_accuracy
        );
    }

    // On the raw report grids the model is well specified, so the learned
    // emissions should track both the empirical confusion and the generator.
    let grids = corpus.report_grids();
    let to_convergence = FitConfig {
        max_iters: 1000,
        rel_tol: 1e-9,
        ..Default::default()
    };
    let fit = em_fit(&grids, &corpus.tags, &to_convergence).expect("fit");
    let counts = confusion_counts(&grids, &corpus.gold_tags, &corpus.tags);
    for (j, src) in spec.sources.iter().enumerate() {
        let generator = generator_emission(src, &corpus.tags);
        let (mut vs_empirical, mut vs_generator) = (0.0f64, 0.0f64);
        for (y, row) in counts[j].iter().enumerate() {
            let n: usize = row.iter().sum();
            if n < 50 {
                continue;
            }
            for (o, &c) in row.iter().enumerate() {
                let learned = fit.params.emission[j][y][o];
                vs_empirical = vs_empirical.max((learned - c as f64 / n as f64).abs());
                vs_generator = vs_generator.max((learned - generator[y][o]).abs());
            }
        }
        println!(
            "{}: max emission error {vs_empirical:.4} vs empirical, {vs_generator:.4} vs generator",
            src.id
        );
    }
}
