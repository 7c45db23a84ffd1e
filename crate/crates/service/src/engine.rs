use std::collections::BTreeSet;

use medentropy::corpus::{Code, Corpus, Vocab};
use medentropy::entropy::{initial_entropy, prefix_entropies, shannon_entropy, InitialEntropyMode};
use medentropy::seq2seq::{hex, Checkpoint, Seq2SeqModel};
use medentropy::Result;

use crate::api::{
    InitialEntropyInfo, ModelInfo, PredictRequest, PredictResponse, RankedCandidate, ScoredCode,
    VocabResponse, WhatIfRequest, WhatIfResponse, SCHEMA_VERSION,
};

/// Number of default what-if candidates.
pub const DEFAULT_CANDIDATES: usize = 20;

/// Frozen model, vocabularies and derived constants shared by all requests.
#[derive(Debug)]
pub struct Engine {
    model: Seq2SeqModel,
    proc_vocab: Vocab,
    diag_vocab: Vocab,
    mode: InitialEntropyMode,
    initial_bits: f64,
    default_candidates: Vec<Code>,
    checkpoint_fingerprint: String,
}

impl Engine {
    /// `corpus` must be bound to the checkpoint (see
    /// [`Checkpoint::bind_corpus`]).
    pub fn new(checkpoint: Checkpoint, corpus: &Corpus, mode: InitialEntropyMode) -> Result<Self> {
        checkpoint
            .header
            .corpus
            .verify(corpus.proc_vocab(), corpus.diag_vocab())?;
        Ok(Engine {
            initial_bits: initial_entropy(mode, corpus)?,
            default_candidates: corpus.most_frequent_procedures(DEFAULT_CANDIDATES),
            proc_vocab: corpus.proc_vocab().clone(),
            diag_vocab: corpus.diag_vocab().clone(),
            mode,
            checkpoint_fingerprint: checkpoint.file_fingerprint,
            model: checkpoint.model,
        })
    }

    pub fn initial_bits(&self) -> f64 {
        self.initial_bits
    }

    pub fn default_candidates(&self) -> &[Code] {
        &self.default_candidates
    }

    fn unknown_warnings(&self, codes: &[Code]) -> Vec<String> {
        let unknown: BTreeSet<&str> = codes
            .iter()
            .map(Code::as_str)
            .filter(|c| !self.proc_vocab.contains(c))
            .collect();
        unknown
            .into_iter()
            .map(|c| format!("unknown procedure code {c:?} treated as <unk>"))
            .collect()
    }

    fn entropy_of(&self, prefix: &[Code]) -> Result<f64> {
        if prefix.is_empty() {
            return Ok(self.initial_bits);
        }
        let dist = self
            .model
            .first_distribution(&self.proc_vocab.encode(prefix))?;
        shannon_entropy(dist.probs())
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse> {
        let step_entropies = prefix_entropies(
            &self.model,
            &req.procedures,
            &self.proc_vocab,
            self.initial_bits,
        )?;
        let mut warnings = self.unknown_warnings(&req.procedures);
        let top_k = if req.procedures.is_empty() {
            warnings
                .push("empty prefix: no diagnosis distribution before the first procedure".into());
            Vec::new()
        } else {
            let dist = self
                .model
                .first_distribution(&self.proc_vocab.encode(&req.procedures))?;
            dist.top_k(req.top_k)
                .into_iter()
                .map(|(i, probability)| ScoredCode {
                    code: self.diag_vocab.token(i).unwrap_or("<unk>").to_string(),
                    probability,
                })
                .collect()
        };
        Ok(PredictResponse {
            schema_version: SCHEMA_VERSION,
            entropy_bits: *step_entropies.last().expect("step 0 is always present"),
            step_entropies,
            top_k,
            warnings,
        })
    }

    pub fn whatif(&self, req: &WhatIfRequest) -> Result<WhatIfResponse> {
        let candidates: BTreeSet<&Code> = req
            .candidates
            .as_deref()
            .unwrap_or(&self.default_candidates)
            .iter()
            .collect();
        let current = self.entropy_of(&req.prefix)?;
        let mut ranked = Vec::with_capacity(candidates.len());
        let mut probe = req.prefix.clone();
        for &code in &candidates {
            probe.push(code.clone());
            let posterior = self.entropy_of(&probe)?;
            probe.pop();
            ranked.push(RankedCandidate {
                code: code.as_str().to_string(),
                posterior_entropy_bits: posterior,
                delta_bits: posterior - current,
            });
        }
        // The set iteration already gives code order; a stable sort keeps it for ties.
        ranked.sort_by(|a, b| {
            a.posterior_entropy_bits
                .total_cmp(&b.posterior_entropy_bits)
        });
        let mut all: Vec<Code> = req.prefix.clone();
        all.extend(candidates.into_iter().cloned());
        Ok(WhatIfResponse {
            schema_version: SCHEMA_VERSION,
            current_entropy_bits: current,
            ranked,
            warnings: self.unknown_warnings(&all),
        })
    }

    pub fn model_info(&self) -> ModelInfo {
        ModelInfo {
            schema_version: SCHEMA_VERSION,
            config: self.model.config().clone(),
            proc_vocab_size: self.proc_vocab.len(),
            diag_vocab_size: self.diag_vocab.len(),
            proc_vocab_fingerprint: hex(self.proc_vocab.fingerprint()),
            diag_vocab_fingerprint: hex(self.diag_vocab.fingerprint()),
            checkpoint_fingerprint: self.checkpoint_fingerprint.clone(),
            initial_entropy: InitialEntropyInfo {
                mode: self.mode.as_str().to_string(),
                bits: self.initial_bits,
            },
        }
    }

    /// Procedure codes containing `query` (case-insensitive), in vocabulary
    /// order, which is most frequent first.
    pub fn search_procedures(&self, query: &str, limit: usize) -> VocabResponse {
        let needle = query.to_lowercase();
        let matches: Vec<&str> = self
            .proc_vocab
            .codes()
            .filter(|c| c.to_lowercase().contains(&needle))
            .collect();
        VocabResponse {
            schema_version: SCHEMA_VERSION,
            total_matches: matches.len(),
            codes: matches.into_iter().take(limit).map(String::from).collect(),
        }
    }
}
