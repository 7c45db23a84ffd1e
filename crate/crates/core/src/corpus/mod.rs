//! Admissions, vocabularies, ingestion and the synthetic EHR world.
//!
//! An [`Admission`] pairs the procedures a patient received (chronological
//! order) with the diagnoses recorded for the stay (priority order, the first
//! one being the primary diagnosis). A [`Corpus`] owns a list of admissions
//! together with one [`Vocab`] per code family and an optional
//! train/validation/test assignment.

mod io;
mod oracle;
mod synth;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_jsonl, load_mimic_csv, read_jsonl, write_jsonl, LoadSummary};
pub use oracle::{
    enumerate_prefixes, expected_entropy_by_length, oracle_entropy, oracle_first_dx_distribution,
    CodeDistribution,
};
pub use synth::{synth_generate, synth_generate_labeled, Condition, GeneratorSpec};
pub use vocab::{build_vocabs, Vocab, EOS, PAD, RESERVED, SOS, UNK};

/// An ICD-style code token such as `"8952"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Code(String);

impl Code {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return Err(Error::InvalidCode(value));
        }
        Ok(Code(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Code {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Code::new(value)
    }
}

impl From<Code> for String {
    fn from(code: Code) -> String {
        code.0
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Code {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Parses a list of string literals into codes. Mostly a convenience for
/// tests and examples.
pub fn codes<S: AsRef<str>>(values: &[S]) -> Result<Vec<Code>> {
    values.iter().map(|v| Code::new(v.as_ref())).collect()
}

/// One hospitalization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    pub id: String,
    /// Chronological order; repeats are meaningful and kept.
    pub procedures: Vec<Code>,
    /// Priority order; `diagnoses[0]` is the primary diagnosis.
    pub diagnoses: Vec<Code>,
}

impl Admission {
    pub fn new(id: impl Into<String>, procedures: Vec<Code>, diagnoses: Vec<Code>) -> Self {
        Admission {
            id: id.into(),
            procedures,
            diagnoses,
        }
    }

    pub fn primary_diagnosis(&self) -> Option<&Code> {
        self.diagnoses.first()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Fractions used by [`split`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Admissions plus the vocabularies derived from them.
///
/// Immutable once built; [`split`] returns a new corpus.
#[derive(Clone, Debug)]
pub struct Corpus {
    admissions: Vec<Admission>,
    proc_vocab: Vocab,
    diag_vocab: Vocab,
    split_of: HashMap<String, Split>,
}

impl Corpus {
    /// Builds vocabularies from `admissions` with the given frequency
    /// threshold. Admission ids must be unique and both code lists non-empty.
    pub fn new(admissions: Vec<Admission>, min_count: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for adm in &admissions {
            if !seen.insert(adm.id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate admission id {:?}",
                    adm.id
                )));
            }
            if adm.procedures.is_empty() || adm.diagnoses.is_empty() {
                return Err(Error::invalid(format!(
                    "admission {:?} has an empty procedure or diagnosis list",
                    adm.id
                )));
            }
        }
        let (proc_vocab, diag_vocab) = build_vocabs(&admissions, min_count)?;
        Ok(Corpus {
            admissions,
            proc_vocab,
            diag_vocab,
            split_of: HashMap::new(),
        })
    }

    pub fn admissions(&self) -> &[Admission] {
        &self.admissions
    }

    pub fn len(&self) -> usize {
        self.admissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admissions.is_empty()
    }

    pub fn proc_vocab(&self) -> &Vocab {
        &self.proc_vocab
    }

    pub fn diag_vocab(&self) -> &Vocab {
        &self.diag_vocab
    }

    pub fn get(&self, id: &str) -> Option<&Admission> {
        self.admissions.iter().find(|a| a.id == id)
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_of.get(id).copied()
    }

    pub fn has_splits(&self) -> bool {
        !self.split_of.is_empty()
    }

    /// Admissions assigned to `split`, in corpus order.
    pub fn admissions_in(&self, split: Split) -> impl Iterator<Item = &Admission> + '_ {
        self.admissions
            .iter()
            .filter(move |a| self.split_of.get(&a.id) == Some(&split))
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let mut sizes = (0, 0, 0);
        for split in self.split_of.values() {
            match split {
                Split::Train => sizes.0 += 1,
                Split::Val => sizes.1 += 1,
                Split::Test => sizes.2 += 1,
            }
        }
        sizes
    }

    /// Procedure codes ordered by total occurrence count (descending, ties
    /// lexicographic).
    pub fn most_frequent_procedures(&self, limit: usize) -> Vec<Code> {
        let mut counts: HashMap<&Code, usize> = HashMap::new();
        for adm in &self.admissions {
            for p in &adm.procedures {
                *counts.entry(p).or_default() += 1;
            }
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked
            .into_iter()
            .take(limit)
            .map(|(c, _)| c.clone())
            .collect()
    }

    /// Summary counts comparable to the dataset description of a real EHR
    /// extract (admissions, distinct codes, sequence lengths).
    pub fn stats(&self) -> CorpusStats {
        let n = self.admissions.len().max(1) as f64;
        let total_procs: usize = self.admissions.iter().map(|a| a.procedures.len()).sum();
        let total_diags: usize = self.admissions.iter().map(|a| a.diagnoses.len()).sum();
        CorpusStats {
            admissions: self.admissions.len(),
            distinct_procedures: self.proc_vocab.n_codes(),
            distinct_diagnoses: self.diag_vocab.n_codes(),
            mean_procedures: total_procs as f64 / n,
            mean_diagnoses: total_diags as f64 / n,
            max_procedures: self
                .admissions
                .iter()
                .map(|a| a.procedures.len())
                .max()
                .unwrap_or(0),
        }
    }

    /// 64-bit FNV-1a over the canonical JSONL serialization.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        write_jsonl(&self.admissions, &mut buf).expect("writing to a Vec cannot fail");
        fnv1a(&buf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub admissions: usize,
    pub distinct_procedures: usize,
    pub distinct_diagnoses: usize,
    pub mean_procedures: f64,
    pub mean_diagnoses: f64,
    pub max_procedures: usize,
}

/// Assigns every admission to train/val/test.
///
/// Sizes are `floor(n * ratio)` for val and test; the remainder goes to
/// train. The permutation depends only on `seed` and corpus order.
pub fn split(corpus: Corpus, ratios: SplitRatios, seed: u64) -> Result<Corpus> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {}",
            train + val + test
        )));
    }
    let n = corpus.admissions.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 admissions to split, got {n}"
        )));
    }
    // The epsilon keeps 0.3 * 10 from flooring to 2.
    let n_val = (n as f64 * val + 1e-9).floor() as usize;
    let n_test = (n as f64 * test + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut split_of = HashMap::with_capacity(n);
    for (rank, &idx) in order.iter().enumerate() {
        let s = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        split_of.insert(corpus.admissions[idx].id.clone(), s);
    }
    Ok(Corpus { split_of, ..corpus })
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}
