//! Multi-source HMM label aggregation.
//!
//! Hidden states are BIO tags over the project's labels. Each weak source is
//! an independent noisy channel with its own confusion matrix over tags plus
//! an abstain symbol. Parameters are fitted with Baum-Welch and documents are
//! decoded with Viterbi under a BIO-masked transition matrix, so decoded
//! sequences are always well formed.

mod baseline;
mod em;
mod inference;
mod params;
mod pipeline;
mod tags;

pub use baseline::{majority_vote, repair_bio};
pub use em::{em_fit, em_fit_from, em_fit_with, Fit};
pub use inference::{forward_backward, path_log_score, viterbi, viterbi_scored, Posterior};
pub use params::{FitConfig, HmmParams, InitConfig};
pub use pipeline::{build_grids, denoise_corpus, denoise_corpus_with, DenoiseOutcome};
pub use tags::{decode_bio, decode_bio_checked, encode_bio, Decoded, Tag, TagKind, TagSpace, OUTSIDE};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DenoiseError {
    #[error("no weak sources given")]
    NoSources,
    #[error("no documents to fit")]
    NoDocuments,
    #[error("source {0:?} has not been applied (no layer with that name)")]
    MissingLayer(String),
    #[error("zero likelihood in document {doc_id} at token {position}")]
    DegenerateLikelihood { doc_id: String, position: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("overlapping spans at {start}..{end}")]
    Overlap { start: usize, end: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("cancelled")]
    Cancelled,
}
