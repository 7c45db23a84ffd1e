//! Diagnostic uncertainty ("medical entropy") over procedure sequences.
//!
//! A sequence-to-sequence model reads the procedures of a hospital admission
//! and predicts its diagnoses. The entropy of the predicted distribution
//! over the primary diagnosis, recomputed after every procedure, traces how
//! each intervention narrows (or widens) the diagnostic picture.
//!
//! Modules, bottom-up:
//!
//! - [`nncore`]: reverse-mode autodiff, GRU layer, Adam, gradient checking
//! - [`corpus`]: admissions, vocabularies, loaders, the synthetic world and
//!   its exact posterior oracle
//! - [`seq2seq`]: the predictor, its training loop and checkpoints
//! - [`entropy`]: entropy of distributions and per-admission trends
//! - [`metrics`]: F1, Jaccard and First-N accuracy
//! - [`analysis`]: n-gram prefix tables, cluster trends and exports

pub mod analysis;
pub mod corpus;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod nncore;
pub mod seq2seq;
pub mod util;

pub use error::{Error, Result};

/// Runs the guide's Rust snippets as doc tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/corpus.md")]
    struct Corpus;
    #[doc = include_str!("../../../book/src/entropy.md")]
    struct Entropy;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/analysis.md")]
    struct Analysis;
}
