//! Exact first-diagnosis posteriors under a [`GeneratorSpec`].
//!
//! `P(d | prefix) ∝ Σ_c prior(c) · P(sequence starts with prefix | c) · P(first diagnosis = d | c)`

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Code, GeneratorSpec};
use crate::entropy::entropy_of_probs;
use crate::error::{Error, Result};

/// A probability distribution keyed by code.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeDistribution(BTreeMap<Code, f64>);

impl CodeDistribution {
    pub fn get(&self, code: &str) -> f64 {
        self.0
            .iter()
            .find(|(c, _)| c.as_str() == code)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Code, f64)> + '_ {
        self.0.iter().map(|(c, p)| (c, *p))
    }

    pub fn probs(&self) -> Vec<f64> {
        self.0.values().copied().collect()
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_of_probs(self.0.values().copied())
    }

    pub fn argmax(&self) -> Option<&Code> {
        self.0
            .iter()
            .fold(None::<(&Code, f64)>, |best, (c, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((c, p)),
            })
            .map(|(c, _)| c)
    }
}

fn posterior_weights(spec: &GeneratorSpec, prefix: &[Code]) -> Result<Vec<f64>> {
    let weights: Vec<f64> = spec
        .conditions
        .iter()
        .map(|c| c.prior * c.prefix_likelihood(prefix, spec.max_procedures))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        let shown: Vec<&str> = prefix.iter().map(Code::as_str).collect();
        return Err(Error::ImpossiblePrefix(format!("[{}]", shown.join(", "))));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Posterior over the first (primary) diagnosis given a procedure prefix.
/// An empty prefix yields the prior marginal.
pub fn oracle_first_dx_distribution(
    spec: &GeneratorSpec,
    prefix: &[Code],
) -> Result<CodeDistribution> {
    let weights = posterior_weights(spec, prefix)?;
    let mut out: BTreeMap<Code, f64> = BTreeMap::new();
    for (cond, w) in spec.conditions.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (code, p) in &cond.diagnoses[0] {
            *out.entry(code.clone()).or_default() += w * p;
        }
    }
    Ok(CodeDistribution(out))
}

/// Shannon entropy (bits) of [`oracle_first_dx_distribution`].
pub fn oracle_entropy(spec: &GeneratorSpec, prefix: &[Code]) -> Result<f64> {
    oracle_first_dx_distribution(spec, prefix).map(|d| d.entropy_bits())
}

/// Every prefix of length `1..=max_len` with non-zero probability, paired
/// with its marginal probability `Σ_c prior(c)·P(prefix | c)`.
///
/// Output is ordered by length, then lexicographically.
pub fn enumerate_prefixes(spec: &GeneratorSpec, max_len: usize) -> Vec<(Vec<Code>, f64)> {
    let alphabet: BTreeSet<&Code> = spec
        .conditions
        .iter()
        .flat_map(|c| {
            c.initial
                .keys()
                .chain(c.transitions.values().flat_map(|r| r.keys()))
        })
        .collect();
    let marginal = |prefix: &[Code]| -> f64 {
        spec.conditions
            .iter()
            .map(|c| c.prior * c.prefix_likelihood(prefix, spec.max_procedures))
            .sum()
    };

    let mut out = Vec::new();
    let mut frontier: Vec<Vec<Code>> = vec![Vec::new()];
    for _ in 0..max_len.min(spec.max_procedures) {
        let mut next = Vec::new();
        for prefix in &frontier {
            for &code in &alphabet {
                let mut candidate = prefix.clone();
                candidate.push(code.clone());
                let p = marginal(&candidate);
                if p > 0.0 {
                    out.push((candidate.clone(), p));
                    next.push(candidate);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Expected oracle entropy at each prefix length `0..=max_len`, weighting
/// prefixes by their probability (renormalized within each length).
pub fn expected_entropy_by_length(spec: &GeneratorSpec, max_len: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; max_len + 1];
    let mut mass = vec![0.0; max_len + 1];
    sums[0] = oracle_entropy(spec, &[])?;
    mass[0] = 1.0;
    for (prefix, p) in enumerate_prefixes(spec, max_len) {
        let m = prefix.len();
        sums[m] += p * oracle_entropy(spec, &prefix)?;
        mass[m] += p;
    }
    Ok(sums
        .into_iter()
        .zip(mass)
        .take_while(|(_, w)| *w > 0.0)
        .map(|(s, w)| s / w)
        .collect())
}
