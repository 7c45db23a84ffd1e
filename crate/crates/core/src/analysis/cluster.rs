use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Code, Corpus};
use crate::entropy::{initial_entropy, trend_with_initial, EntropyTrend, InitialEntropyMode};
use crate::error::{Error, Result};
use crate::seq2seq::Seq2SeqModel;

/// A primary-diagnosis cluster, or every admission.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClusterKey {
    All,
    Primary(Code),
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterKey::All => f.write_str("ALL"),
            ClusterKey::Primary(c) => f.write_str(c.as_str()),
        }
    }
}

impl From<ClusterKey> for String {
    fn from(k: ClusterKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for ClusterKey {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "ALL" {
            Ok(ClusterKey::All)
        } else {
            Code::new(s).map(ClusterKey::Primary)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    pub step: usize,
    /// `None` when the cluster is empty.
    pub mean_bits: Option<f64>,
    /// Population standard deviation.
    pub std_bits: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrend {
    pub cluster_key: ClusterKey,
    pub length_filter: usize,
    pub per_step: Vec<StepStat>,
}

impl ClusterTrend {
    pub fn count(&self) -> usize {
        self.per_step.first().map_or(0, |s| s.count)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.per_step.iter().map(|s| s.mean_bits).collect()
    }
}

/// Entropy trends of every admission (optionally only those with exactly
/// `length` procedures), in corpus order.
pub fn all_trends(
    model: &Seq2SeqModel,
    corpus: &Corpus,
    mode: InitialEntropyMode,
    length: Option<usize>,
) -> Result<Vec<EntropyTrend>> {
    let initial = initial_entropy(mode, corpus)?;
    corpus
        .admissions()
        .iter()
        .filter(|a| length.is_none_or(|m| a.procedures.len() == m))
        .map(|a| trend_with_initial(model, a, corpus.proc_vocab(), initial))
        .collect()
}

/// Mean and population standard deviation of the trends of length-`m`
/// admissions, per primary-diagnosis key, followed by the ALL cluster.
/// Empty clusters are reported with count 0 and no statistics.
pub fn cluster_trends(
    model: &Seq2SeqModel,
    corpus: &Corpus,
    length_filter: usize,
    keys: &[Code],
    mode: InitialEntropyMode,
) -> Result<Vec<ClusterTrend>> {
    if length_filter == 0 {
        return Err(Error::invalid("length filter must be at least 1"));
    }
    let initial = initial_entropy(mode, corpus)?;
    let mut trends = Vec::new();
    let mut primary = Vec::new();
    for adm in corpus
        .admissions()
        .iter()
        .filter(|a| a.procedures.len() == length_filter)
    {
        trends.push(trend_with_initial(
            model,
            adm,
            corpus.proc_vocab(),
            initial,
        )?);
        primary.push(adm.primary_diagnosis());
    }

    let mut out = Vec::with_capacity(keys.len() + 1);
    for key in keys
        .iter()
        .map(|k| ClusterKey::Primary(k.clone()))
        .chain([ClusterKey::All])
    {
        let members: Vec<&EntropyTrend> = trends
            .iter()
            .zip(&primary)
            .filter(|(_, p)| match &key {
                ClusterKey::All => true,
                ClusterKey::Primary(k) => **p == Some(k),
            })
            .map(|(t, _)| t)
            .collect();
        out.push(summarize(key, length_filter, &members));
    }
    Ok(out)
}

fn summarize(key: ClusterKey, m: usize, members: &[&EntropyTrend]) -> ClusterTrend {
    let count = members.len();
    let per_step = (0..=m)
        .map(|step| {
            if count == 0 {
                return StepStat {
                    step,
                    mean_bits: None,
                    std_bits: None,
                    count,
                };
            }
            let values: Vec<f64> = members.iter().map(|t| t.steps[step].entropy_bits).collect();
            // Identical members give exactly their value and zero spread.
            let mean = if values.iter().all(|v| *v == values[0]) {
                values[0]
            } else {
                values.iter().sum::<f64>() / count as f64
            };
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            StepStat {
                step,
                mean_bits: Some(mean),
                std_bits: Some(var.sqrt()),
                count,
            }
        })
        .collect();
    ClusterTrend {
        cluster_key: key,
        length_filter: m,
        per_step,
    }
}
