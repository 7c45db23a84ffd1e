//! Latent-condition synthetic EHR generator.
//!
//! Each condition owns a first-order Markov chain over procedure codes and a
//! per-position emission distribution over diagnosis codes. Because every
//! piece is an explicit finite table, posteriors over the first diagnosis can
//! be enumerated exactly (see the oracle).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Code, Corpus};
use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    #[serde(default)]
    pub name: String,
    pub prior: f64,
    /// Distribution of the first procedure.
    pub initial: BTreeMap<Code, f64>,
    /// Row-stochastic transition table `from -> to -> p`.
    #[serde(default)]
    pub transitions: BTreeMap<Code, BTreeMap<Code, f64>>,
    /// Probability of ending the sequence after any procedure.
    #[serde(default)]
    pub stop_probability: f64,
    /// Per-state stop probabilities that replace `stop_probability`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stop_overrides: BTreeMap<Code, f64>,
    /// One categorical distribution per diagnosis position; the sampled
    /// diagnosis list has exactly this many entries.
    pub diagnoses: Vec<BTreeMap<Code, f64>>,
}

impl Condition {
    pub fn stop_after(&self, code: &Code) -> f64 {
        self.stop_overrides
            .get(code)
            .copied()
            .unwrap_or(self.stop_probability)
    }

    pub fn transition(&self, from: &Code, to: &Code) -> f64 {
        self.transitions
            .get(from)
            .and_then(|row| row.get(to))
            .copied()
            .unwrap_or(0.0)
    }

    /// Probability that a sampled procedure sequence starts with `prefix`.
    pub fn prefix_likelihood(&self, prefix: &[Code], max_procedures: usize) -> f64 {
        let Some(first) = prefix.first() else {
            return 1.0;
        };
        if prefix.len() > max_procedures {
            return 0.0;
        }
        let mut p = self.initial.get(first).copied().unwrap_or(0.0);
        for pair in prefix.windows(2) {
            if p == 0.0 {
                break;
            }
            p *= (1.0 - self.stop_after(&pair[0])) * self.transition(&pair[0], &pair[1]);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub seed: u64,
    pub max_procedures: usize,
}

impl GeneratorSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GeneratorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.conditions.is_empty() {
            return bad("at least one condition is required".into());
        }
        if self.max_procedures < 1 {
            return bad("max_procedures must be at least 1".into());
        }
        let priors: f64 = self.conditions.iter().map(|c| c.prior).sum();
        if self
            .conditions
            .iter()
            .any(|c| c.prior.is_nan() || c.prior < 0.0)
            || (priors - 1.0).abs() > TOL
        {
            return bad(format!(
                "priors must be non-negative and sum to 1 (sum = {priors})"
            ));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            let label = if c.name.is_empty() {
                format!("condition {i}")
            } else {
                format!("condition {:?}", c.name)
            };
            check_distribution(&c.initial, &format!("{label}: initial distribution"))?;
            for (from, row) in &c.transitions {
                check_distribution(row, &format!("{label}: transition row {from}"))?;
            }
            for (code, &p) in std::iter::once((None, &c.stop_probability))
                .chain(c.stop_overrides.iter().map(|(k, v)| (Some(k), v)))
            {
                if !(0.0..=1.0).contains(&p) {
                    let at = code.map(|c| format!(" for {c}")).unwrap_or_default();
                    return bad(format!("{label}: stop probability{at} must lie in [0, 1]"));
                }
            }
            // A state that can continue needs somewhere to go.
            let mut states: Vec<&Code> = c.initial.keys().collect();
            states.extend(c.transitions.values().flat_map(|row| row.keys()));
            for s in states {
                if c.stop_after(s) < 1.0
                    && self.max_procedures > 1
                    && !c.transitions.contains_key(s)
                {
                    return bad(format!(
                        "{label}: state {s} can continue (stop < 1) but has no transition row"
                    ));
                }
            }
            if c.diagnoses.is_empty() {
                return bad(format!(
                    "{label}: diagnosis emission must have at least one position"
                ));
            }
            for (pos, dist) in c.diagnoses.iter().enumerate() {
                check_distribution(dist, &format!("{label}: diagnosis position {pos}"))?;
            }
        }
        Ok(())
    }
}

fn check_distribution(dist: &BTreeMap<Code, f64>, what: &str) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidSpec(format!("{what} is empty")));
    }
    if dist.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidSpec(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = dist.values().sum();
    if (sum - 1.0).abs() > TOL {
        return Err(Error::InvalidSpec(format!(
            "{what} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Samples from a categorical distribution given in key order.
fn sample<'a, K>(rng: &mut impl Rng, items: impl IntoIterator<Item = (&'a K, f64)>) -> &'a K
where
    K: 'a,
{
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (k, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(k);
        if u < acc {
            return k;
        }
    }
    last.expect("validated distributions have positive mass")
}

fn sample_admission(spec: &GeneratorSpec, rng: &mut ChaCha8Rng, id: String) -> (usize, Admission) {
    let priors: Vec<(usize, f64)> = spec
        .conditions
        .iter()
        .map(|c| c.prior)
        .enumerate()
        .collect();
    let ci = *sample(rng, priors.iter().map(|(i, p)| (i, *p)));
    let cond = &spec.conditions[ci];

    let mut procedures = vec![sample(rng, cond.initial.iter().map(|(k, v)| (k, *v))).clone()];
    while procedures.len() < spec.max_procedures {
        let current = procedures.last().expect("non-empty");
        let stop = cond.stop_after(current);
        if stop > 0.0 && rng.gen::<f64>() < stop {
            break;
        }
        let row = &cond.transitions[current];
        let next = sample(rng, row.iter().map(|(k, v)| (k, *v))).clone();
        procedures.push(next);
    }

    let diagnoses = cond
        .diagnoses
        .iter()
        .map(|dist| sample(rng, dist.iter().map(|(k, v)| (k, *v))).clone())
        .collect();
    (ci, Admission::new(id, procedures, diagnoses))
}

/// Draws `n` admissions. Deterministic for a given spec (including its seed).
pub fn synth_generate(spec: &GeneratorSpec, n: usize) -> Result<Corpus> {
    synth_generate_labeled(spec, n).map(|(corpus, _)| corpus)
}

/// Like [`synth_generate`], also returning the latent condition index of
/// every admission.
pub fn synth_generate_labeled(spec: &GeneratorSpec, n: usize) -> Result<(Corpus, Vec<usize>)> {
    spec.validate()?;
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = n.to_string().len().max(6);
    let (labels, admissions): (Vec<_>, Vec<_>) = (0..n)
        .map(|i| sample_admission(spec, &mut rng, format!("syn-{:0width$}", i + 1)))
        .unzip();
    Ok((Corpus::new(admissions, 1)?, labels))
}
