//! Medical entropy: Shannon entropy (bits) of the predicted primary-diagnosis
//! distribution, tracked across the cumulative procedure prefixes of an
//! admission.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Code, Corpus, Vocab};
use crate::error::{Error, Result};
use crate::seq2seq::Seq2SeqModel;

/// Probabilities below this contribute nothing (0·log 0 := 0).
pub const PROB_FLOOR: f64 = 1e-12;

/// `-Σ p·log2 p` without validating the input.
pub fn entropy_of_probs(probs: impl IntoIterator<Item = f64>) -> f64 {
    let h = compensated_sum(
        probs
            .into_iter()
            .filter(|&p| p >= PROB_FLOOR)
            .map(|p| -p * p.log2()),
    );
    // Rounding can leave a tiny negative for one-hot inputs.
    h.max(0.0)
}

/// Neumaier summation; large vocabularies otherwise drift by ~1e-12.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Shannon entropy in bits. Errors if the entries do not form a
/// distribution (sum off by more than 1e-6, or negative entries).
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(
            "entropy needs finite, non-negative probabilities",
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(entropy_of_probs(probs.iter().copied()))
}

/// Entropy of the uniform distribution over `k` outcomes.
pub fn uniform_entropy(k: usize) -> f64 {
    (k as f64).log2()
}

/// How the step-0 entropy (before any procedure) is defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialEntropyMode {
    /// Uniform over the procedure codes.
    #[default]
    #[serde(rename = "uniform-proc")]
    UniformProcedure,
    /// Uniform over the diagnosis codes.
    #[serde(rename = "uniform-diag")]
    UniformDiagnosis,
    /// Entropy of the observed first-procedure frequencies.
    #[serde(rename = "empirical")]
    EmpiricalFrequency,
}

impl InitialEntropyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialEntropyMode::UniformProcedure => "uniform-proc",
            InitialEntropyMode::UniformDiagnosis => "uniform-diag",
            InitialEntropyMode::EmpiricalFrequency => "empirical",
        }
    }
}

impl fmt::Display for InitialEntropyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitialEntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-proc" => Ok(Self::UniformProcedure),
            "uniform-diag" => Ok(Self::UniformDiagnosis),
            "empirical" => Ok(Self::EmpiricalFrequency),
            other => Err(Error::invalid(format!(
                "unknown initial entropy mode {other:?} (expected uniform-proc, uniform-diag or empirical)"
            ))),
        }
    }
}

pub fn initial_entropy(mode: InitialEntropyMode, corpus: &Corpus) -> Result<f64> {
    match mode {
        InitialEntropyMode::UniformProcedure => Ok(uniform_entropy(corpus.proc_vocab().n_codes())),
        InitialEntropyMode::UniformDiagnosis => Ok(uniform_entropy(corpus.diag_vocab().n_codes())),
        InitialEntropyMode::EmpiricalFrequency => first_procedure_entropy(corpus.admissions()),
    }
}

/// Entropy of the distribution of first procedures across admissions.
pub fn first_procedure_entropy(admissions: &[Admission]) -> Result<f64> {
    let mut counts: HashMap<&Code, usize> = HashMap::new();
    for adm in admissions {
        if let Some(first) = adm.procedures.first() {
            *counts.entry(first).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::invalid(
            "empirical initial entropy needs at least one admission",
        ));
    }
    let mut counts: Vec<usize> = counts.into_values().collect();
    counts.sort_unstable();
    Ok(entropy_of_probs(
        counts.into_iter().map(|c| c as f64 / total as f64),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendStep {
    pub step: usize,
    /// The procedure received at this step; `None` at step 0.
    pub procedure: Option<Code>,
    pub entropy_bits: f64,
}

/// Entropies `e_0..e_M` of one admission, one per cumulative prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrend {
    pub admission_id: String,
    pub steps: Vec<TrendStep>,
}

impl EntropyTrend {
    pub fn entropies(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.entropy_bits).collect()
    }

    /// True when some step raises the entropy by more than `tol`.
    pub fn is_non_monotone(&self, tol: f64) -> bool {
        self.steps
            .windows(2)
            .any(|w| w[1].entropy_bits > w[0].entropy_bits + tol)
    }
}

/// Step entropies for a procedure prefix: `[initial, e_1, ..., e_m]`.
/// Unknown codes are encoded as UNK.
pub fn prefix_entropies(
    model: &Seq2SeqModel,
    procedures: &[Code],
    proc_vocab: &Vocab,
    initial_bits: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(procedures.len() + 1);
    out.push(initial_bits);
    if procedures.is_empty() {
        return Ok(out);
    }
    for dist in model.prefix_distributions(&proc_vocab.encode(procedures))? {
        out.push(shannon_entropy(dist.probs())?);
    }
    Ok(out)
}

/// Trend of one admission with a precomputed step-0 entropy.
pub fn trend_with_initial(
    model: &Seq2SeqModel,
    admission: &Admission,
    proc_vocab: &Vocab,
    initial_bits: f64,
) -> Result<EntropyTrend> {
    if admission.procedures.is_empty() {
        return Err(Error::invalid(format!(
            "admission {:?} has no procedures",
            admission.id
        )));
    }
    let entropies = prefix_entropies(model, &admission.procedures, proc_vocab, initial_bits)?;
    let steps = entropies
        .into_iter()
        .enumerate()
        .map(|(m, entropy_bits)| TrendStep {
            step: m,
            procedure: m.checked_sub(1).map(|i| admission.procedures[i].clone()),
            entropy_bits,
        })
        .collect();
    Ok(EntropyTrend {
        admission_id: admission.id.clone(),
        steps,
    })
}

/// Step 0 carries the initial entropy; step `m` the entropy after the first `m` procedures.
pub fn entropy_trend(
    model: &Seq2SeqModel,
    admission: &Admission,
    mode: InitialEntropyMode,
    corpus: &Corpus,
) -> Result<EntropyTrend> {
    let initial = initial_entropy(mode, corpus)?;
    trend_with_initial(model, admission, corpus.proc_vocab(), initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::codes;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(shannon_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.5, 0.25, 0.25]).unwrap() - 1.5).abs() < 1e-15);
        assert!(shannon_entropy(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn uniform_matches_log2() {
        for k in [2usize, 10, 6984] {
            let h = shannon_entropy(&vec![1.0 / k as f64; k]).unwrap();
            assert!((h - (k as f64).log2()).abs() < 1e-12, "{k}: {h}");
        }
        assert!((uniform_entropy(6984) - 12.77).abs() < 0.01);
        assert_eq!(uniform_entropy(4), 2.0);
    }

    #[test]
    fn initial_modes() {
        let adms = vec![
            Admission::new("a", codes(&["a"]).unwrap(), codes(&["d1"]).unwrap()),
            Admission::new("b", codes(&["a", "c"]).unwrap(), codes(&["d2"]).unwrap()),
            Admission::new("c", codes(&["b"]).unwrap(), codes(&["d1"]).unwrap()),
            Admission::new("d", codes(&["b", "d"]).unwrap(), codes(&["d1"]).unwrap()),
        ];
        let corpus = Corpus::new(adms, 1).unwrap();
        assert_eq!(
            initial_entropy(InitialEntropyMode::UniformProcedure, &corpus).unwrap(),
            2.0
        );
        assert_eq!(
            initial_entropy(InitialEntropyMode::UniformDiagnosis, &corpus).unwrap(),
            1.0
        );
        assert_eq!(
            initial_entropy(InitialEntropyMode::EmpiricalFrequency, &corpus).unwrap(),
            1.0
        );
        assert!(first_procedure_entropy(&[]).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [
            InitialEntropyMode::UniformProcedure,
            InitialEntropyMode::UniformDiagnosis,
            InitialEntropyMode::EmpiricalFrequency,
        ] {
            assert_eq!(mode.as_str().parse::<InitialEntropyMode>().unwrap(), mode);
            assert_eq!(serde_json::to_string(&mode).unwrap(), format!("\"{mode}\""));
        }
        assert!("uniform".parse::<InitialEntropyMode>().is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(weights in prop::collection::vec(0.0f64..10.0, 1..30), rot in 0usize..30) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let mut permuted = probs.clone();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            let a = shannon_entropy(&probs).unwrap();
            let b = shannon_entropy(&permuted).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a <= (probs.len() as f64).log2() + 1e-9);
        }
    }
}
