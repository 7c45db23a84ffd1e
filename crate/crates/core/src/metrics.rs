//! Set-based F1, Jaccard index and First-N accuracy for predicted
//! diagnosis lists.
//!
//! All three deduplicate their inputs. The ground truth must be non-empty;
//! an empty prediction scores 0.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Code, Corpus, Split};
use crate::error::{Error, Result};
use crate::seq2seq::Seq2SeqModel;

/// The N values reported by [`evaluate`].
pub const FIRST_N: [usize; 3] = [1, 2, 3];

fn as_set(codes: &[Code]) -> HashSet<&str> {
    codes.iter().map(Code::as_str).collect()
}

fn require_truth(truth: &[Code]) -> Result<()> {
    if truth.is_empty() {
        Err(Error::invalid("ground-truth diagnosis list is empty"))
    } else {
        Ok(())
    }
}

pub fn f1_set(predicted: &[Code], truth: &[Code]) -> Result<f64> {
    require_truth(truth)?;
    let (p, t) = (as_set(predicted), as_set(truth));
    if p.is_empty() {
        return Ok(0.0);
    }
    let hits = p.intersection(&t).count() as f64;
    let precision = hits / p.len() as f64;
    let recall = hits / t.len() as f64;
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

pub fn jaccard(predicted: &[Code], truth: &[Code]) -> Result<f64> {
    require_truth(truth)?;
    let (p, t) = (as_set(predicted), as_set(truth));
    let inter = p.intersection(&t).count() as f64;
    let union = p.union(&t).count() as f64;
    Ok(inter / union)
}

/// Share of the first `n` ground-truth diagnoses found among the first `n`
/// predictions. The denominator is `min(n, |truth|)`.
pub fn first_n_accuracy(predicted: &[Code], truth: &[Code], n: usize) -> Result<f64> {
    require_truth(truth)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let p = as_set(&predicted[..n.min(predicted.len())]);
    let t = as_set(&truth[..n.min(truth.len())]);
    Ok(p.intersection(&t).count() as f64 / n.min(truth.len()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub jaccard: f64,
    /// Keyed by N.
    pub first_n: BTreeMap<usize, f64>,
    pub n_evaluated: usize,
}

/// Macro-averages the metrics over `(predicted, truth)` pairs.
pub fn evaluate_predictions<'a, I>(pairs: I) -> Result<MetricsReport>
where
    I: IntoIterator<Item = (&'a [Code], &'a [Code])>,
{
    let mut f1 = 0.0;
    let mut jac = 0.0;
    let mut first = [0.0; FIRST_N.len()];
    let mut n = 0usize;
    for (pred, truth) in pairs {
        f1 += f1_set(pred, truth)?;
        jac += jaccard(pred, truth)?;
        for (acc, k) in first.iter_mut().zip(FIRST_N) {
            *acc += first_n_accuracy(pred, truth, k)?;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mean = |s: f64| s / n as f64;
    Ok(MetricsReport {
        f1: mean(f1),
        jaccard: mean(jac),
        first_n: FIRST_N
            .iter()
            .zip(first)
            .map(|(&k, s)| (k, mean(s)))
            .collect(),
        n_evaluated: n,
    })
}

/// Greedy-decodes every admission of `split` (all admissions when `None`)
/// and macro-averages the metrics.
pub fn evaluate(
    model: &Seq2SeqModel,
    corpus: &Corpus,
    split: Option<Split>,
) -> Result<MetricsReport> {
    let admissions: Vec<&Admission> = match split {
        Some(s) => corpus.admissions_in(s).collect(),
        None => corpus.admissions().iter().collect(),
    };
    if admissions.is_empty() {
        return Err(Error::invalid(format!(
            "split {} is empty",
            split.map_or("all", Split::as_str)
        )));
    }
    let predictions = admissions
        .iter()
        .map(|adm| predict_codes(model, corpus, &adm.procedures))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(
        predictions
            .iter()
            .zip(&admissions)
            .map(|(p, a)| (p.as_slice(), a.diagnoses.as_slice())),
    )
}

/// Greedy decoding mapped back to codes; reserved tokens come back as
/// their `<...>` names.
pub fn predict_codes(
    model: &Seq2SeqModel,
    corpus: &Corpus,
    procedures: &[Code],
) -> Result<Vec<Code>> {
    let vocab = corpus.diag_vocab();
    model
        .greedy_decode(&corpus.proc_vocab().encode(procedures))?
        .into_iter()
        .map(|i| Code::new(vocab.token(i).unwrap_or("<unk>")))
        .collect()
}
