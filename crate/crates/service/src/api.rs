//! Wire types. Every response body carries `schema_version`.

use medentropy::corpus::Code;
use medentropy::seq2seq::ModelConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_TOP_K: usize = 10;

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub procedures: Vec<Code>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCode {
    pub code: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub entropy_bits: f64,
    /// `[initial, e_1, ..., e_m]`
    pub step_entropies: Vec<f64>,
    /// Most probable first diagnoses, descending. Empty for an empty prefix.
    pub top_k: Vec<ScoredCode>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub prefix: Vec<Code>,
    /// Defaults to the most frequent procedures of the corpus.
    #[serde(default)]
    pub candidates: Option<Vec<Code>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub code: String,
    pub posterior_entropy_bits: f64,
    /// `posterior - current`; negative means the procedure reduces entropy.
    pub delta_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub current_entropy_bits: f64,
    /// Ascending by posterior entropy, ties by code.
    pub ranked: Vec<RankedCandidate>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialEntropyInfo {
    pub mode: String,
    pub bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub proc_vocab_size: usize,
    pub diag_vocab_size: usize,
    pub proc_vocab_fingerprint: String,
    pub diag_vocab_fingerprint: String,
    pub checkpoint_fingerprint: String,
    pub initial_entropy: InitialEntropyInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabResponse {
    pub schema_version: u32,
    pub codes: Vec<String>,
    pub total_matches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub schema_version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub schema_version: u32,
    pub error: ErrorBody,
}
