use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Code, Corpus};
use crate::entropy::{initial_entropy, prefix_entropies, InitialEntropyMode};
use crate::error::{Error, Result};
use crate::seq2seq::Seq2SeqModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramRow {
    pub rank: usize,
    pub prefix: Vec<Code>,
    pub cases: usize,
    /// `cases / total admissions`, as a raw fraction.
    pub frequency: f64,
    /// Entry `m-1` is the entropy after the first `m` procedures.
    pub entropy_after: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramTable {
    pub n: usize,
    /// Step-0 entropy shared by every row. Absent when read back from CSV.
    pub initial_bits: Option<f64>,
    pub rows: Vec<NGramRow>,
}

/// Distinct first-`n` procedure prefixes with their admission counts,
/// most frequent first, ties in lexicographic prefix order.
pub fn count_prefixes(admissions: &[Admission], n: usize) -> Vec<(Vec<Code>, usize)> {
    let mut counts: HashMap<&[Code], usize> = HashMap::new();
    for adm in admissions.iter().filter(|a| a.procedures.len() >= n) {
        *counts.entry(&adm.procedures[..n]).or_default() += 1;
    }
    let mut ranked: Vec<(Vec<Code>, usize)> =
        counts.into_iter().map(|(k, v)| (k.to_vec(), v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// The `top` most frequent first-`n` prefixes and the model entropy after
/// each of their procedures.
pub fn ngram_entropy_table(
    model: &Seq2SeqModel,
    corpus: &Corpus,
    n: usize,
    top: usize,
    mode: InitialEntropyMode,
) -> Result<NGramTable> {
    if n == 0 || top == 0 {
        return Err(Error::invalid("n and top must be at least 1"));
    }
    let ranked = count_prefixes(corpus.admissions(), n);
    if ranked.is_empty() {
        return Err(Error::invalid(format!(
            "no admission has at least {n} procedures"
        )));
    }
    let initial_bits = initial_entropy(mode, corpus)?;
    let total = corpus.len() as f64;
    let rows = ranked
        .into_iter()
        .take(top)
        .enumerate()
        .map(|(i, (prefix, cases))| {
            let steps = prefix_entropies(model, &prefix, corpus.proc_vocab(), initial_bits)?;
            Ok(NGramRow {
                rank: i + 1,
                cases,
                frequency: cases as f64 / total,
                entropy_after: steps[1..].to_vec(),
                prefix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NGramTable {
        n,
        initial_bits: Some(initial_bits),
        rows,
    })
}

/// Presentation table: frequency in percent for N = 1, per mille otherwise.
pub fn render_ngram_markdown(table: &NGramTable) -> String {
    let mut out = String::new();
    let procs = if table.n == 1 {
        "Procedure"
    } else {
        "Procedures"
    };
    let _ = write!(out, "| Rank | {procs} | Cases | Frequency |");
    for m in 1..=table.n {
        let _ = write!(out, " Entropy after #{m} |");
    }
    out.push('\n');
    out.push_str(&"|---".repeat(4 + table.n));
    out.push_str("|\n");
    for row in &table.rows {
        let freq = if table.n == 1 {
            format!("{:.2}%", row.frequency * 100.0)
        } else {
            format!("{:.1}‰", row.frequency * 1000.0)
        };
        let codes: Vec<&str> = row.prefix.iter().map(Code::as_str).collect();
        let _ = write!(
            out,
            "| {} | {} | {} | {} |",
            row.rank,
            codes.join(" "),
            row.cases,
            freq
        );
        for e in &row.entropy_after {
            let _ = write!(out, " {e:.4} |");
        }
        out.push('\n');
    }
    out
}
