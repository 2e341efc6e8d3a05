//! Span metrics, the synthetic corpus generator and the two experiments:
//! dictionary coverage as a function of the annotated fraction, and
//! recall before and after denoising.

mod denoise_exp;
mod dict_exp;
mod metrics;
mod synth;

pub use denoise_exp::{
    confusion_counts, denoising_experiment, gold_tags, token_accuracy, DenoiseReport, DenoiseRun, LayerScores,
    DENOISED_ROW, MAJORITY_ROW, MERGED_ROW,
};
pub use dict_exp::{dictionary_experiment, CurvePoint, DictCurve, ExperimentConfig};
pub use metrics::{score_layers, score_spans, CorpusScores, MatchCounts, MatchMode, Scores};
pub use synth::{generator_emission, synth_corpus, SynthCorpus, SynthSource, SynthSpec};

use thiserror::Error;

use crate::denoiser::DenoiseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{side} spans overlap")]
    Overlap { side: &'static str },
    #[error("document {doc}: {source}")]
    InDocument { doc: String, source: Box<EvalError> },
    #[error("ratio {ratio} of {n_docs} documents selects none")]
    InsufficientDocs { ratio: f64, n_docs: usize },
    #[error("no layer named {0:?}")]
    MissingLayer(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

impl EvalError {
    pub(crate) fn in_doc(self, doc: &str) -> EvalError {
        EvalError::InDocument {
            doc: doc.to_string(),
            source: Box::new(self),
        }
    }
}
