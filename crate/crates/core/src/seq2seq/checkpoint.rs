//! Checkpoint file layout:
//!
//! ```text
//! b"MDENTCKP"                 8-byte magic
//! u64 LE                      header length in bytes
//! header                      UTF-8 JSON, see `CheckpointHeader`
//! parameter blocks            rows*cols little-endian f64 each, header order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{fnv1a, split, Admission, Corpus, SplitRatios, Vocab};
use crate::error::{Error, Result};
use crate::nncore::Matrix;
use crate::seq2seq::{ModelConfig, Seq2SeqModel};
use crate::util::atomic_write;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MDENTCKP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// How the training corpus was prepared, so that evaluation can rebuild
/// the same vocabularies and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusBinding {
    /// Hex FNV-1a of the procedure vocabulary token list.
    pub proc_vocab_fingerprint: String,
    pub diag_vocab_fingerprint: String,
    pub min_count: usize,
    pub split_ratios: Option<SplitRatios>,
    pub split_seed: Option<u64>,
}

impl CorpusBinding {
    pub fn new(proc: &Vocab, diag: &Vocab, min_count: usize) -> Self {
        CorpusBinding {
            proc_vocab_fingerprint: hex(proc.fingerprint()),
            diag_vocab_fingerprint: hex(diag.fingerprint()),
            min_count,
            split_ratios: None,
            split_seed: None,
        }
    }

    pub fn for_corpus(corpus: &Corpus, min_count: usize) -> Self {
        Self::new(corpus.proc_vocab(), corpus.diag_vocab(), min_count)
    }

    pub fn with_split(mut self, ratios: SplitRatios, seed: u64) -> Self {
        self.split_ratios = Some(ratios);
        self.split_seed = Some(seed);
        self
    }

    /// Errors naming the first fingerprint that differs.
    pub fn verify(&self, proc: &Vocab, diag: &Vocab) -> Result<()> {
        for (field, expected, vocab) in [
            ("proc_vocab_fingerprint", &self.proc_vocab_fingerprint, proc),
            ("diag_vocab_fingerprint", &self.diag_vocab_fingerprint, diag),
        ] {
            let found = hex(vocab.fingerprint());
            if &found != expected {
                return Err(Error::CheckpointMismatch {
                    field,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

pub fn hex(v: u64) -> String {
    format!("{v:016x}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub corpus: CorpusBinding,
    pub parameters: Vec<ParamShape>,
}

/// A loaded checkpoint: the model plus its header and a fingerprint of the
/// file bytes.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Seq2SeqModel,
    pub file_fingerprint: String,
}

impl Checkpoint {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Checkpoint("file is truncated".into());
        if bytes.len() < 16 {
            return Err(truncated());
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(truncated)?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes[16..body])
            .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        let version = raw.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::CheckpointMismatch {
                field: "format_version",
                expected: FORMAT_VERSION.to_string(),
                found: version.map_or("missing".into(), |v| v.to_string()),
            });
        }
        let header: CheckpointHeader = serde_json::from_value(raw)
            .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;

        let mut model = Seq2SeqModel::new(header.config.clone())?;
        let expected: usize = header.parameters.iter().map(|p| p.rows * p.cols * 8).sum();
        let payload = &bytes[body..];
        if payload.len() < expected {
            return Err(truncated());
        }
        if payload.len() > expected {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after parameters",
                payload.len() - expected
            )));
        }
        if header.parameters.len() != model.params.len() {
            return Err(Error::CheckpointMismatch {
                field: "parameters",
                expected: model.params.len().to_string(),
                found: header.parameters.len().to_string(),
            });
        }

        let mut offset = 0;
        let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
        for (shape, id) in header.parameters.iter().zip(ids) {
            let param = model.params.get_mut(id);
            if param.name != shape.name || param.value.shape() != (shape.rows, shape.cols) {
                return Err(Error::CheckpointMismatch {
                    field: "parameters",
                    expected: format!("{} {:?}", param.name, param.value.shape()),
                    found: format!("{} {:?}", shape.name, (shape.rows, shape.cols)),
                });
            }
            let n = shape.rows * shape.cols;
            let data = payload[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += 8 * n;
            param.value = Matrix::from_vec(shape.rows, shape.cols, data)?;
        }
        Ok(Checkpoint {
            header,
            model,
            file_fingerprint: hex(fnv1a(bytes)),
        })
    }

    /// Rebuilds the training-time corpus view of `admissions`: same
    /// `min_count`, same split, and vocabularies matching the header.
    pub fn bind_corpus(&self, admissions: Vec<Admission>) -> Result<Corpus> {
        let binding = &self.header.corpus;
        let corpus = Corpus::new(admissions, binding.min_count)?;
        binding.verify(corpus.proc_vocab(), corpus.diag_vocab())?;
        match (binding.split_ratios, binding.split_seed) {
            (Some(ratios), Some(seed)) => split(corpus, ratios, seed),
            _ => Ok(corpus),
        }
    }
}

pub fn checkpoint_bytes(model: &Seq2SeqModel, binding: &CorpusBinding) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        corpus: binding.clone(),
        parameters: model
            .params
            .iter()
            .map(|(_, p)| ParamShape {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header.len() + model.params.n_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, p) in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the checkpoint atomically (temp file + rename).
pub fn save_checkpoint(
    model: &Seq2SeqModel,
    binding: &CorpusBinding,
    path: impl AsRef<Path>,
) -> Result<()> {
    atomic_write(path, &checkpoint_bytes(model, binding)?)
}

/// Loads a checkpoint and checks it against the vocabularies it will be
/// used with.
pub fn load_checkpoint(path: impl AsRef<Path>, proc: &Vocab, diag: &Vocab) -> Result<Seq2SeqModel> {
    let ckpt = Checkpoint::read(path)?;
    ckpt.header.corpus.verify(proc, diag)?;
    Ok(ckpt.model)
}
