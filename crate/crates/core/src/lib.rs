//! Weak supervision for sequence annotation.
//!
//! * [`corpus`]: documents, tokens, Brat standoff I/O and validation.
//! * [`weak_sources`]: text match, regex, rule and dictionary labelers, and
//!   the per-token vote grids they feed to the denoiser.
//! * [`denoiser`]: a multi-source HMM fitted with EM and decoded with Viterbi.
//! * [`evaluation`]: span metrics, synthetic corpora and the dictionary and
//!   denoising experiments.
//! * [`project_dir`]: the on-disk project layout.

pub mod corpus;
pub mod denoiser;
pub mod evaluation;
pub mod project_dir;
pub mod weak_sources;
