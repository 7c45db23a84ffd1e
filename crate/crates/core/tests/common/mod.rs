#![allow(dead_code)]

use std::collections::BTreeMap;

use medentropy::corpus::Corpus;
use medentropy::corpus::{Code, Condition, GeneratorSpec};
use medentropy::seq2seq::{ModelConfig, Seq2SeqModel};

pub fn c(s: &str) -> Code {
    Code::new(s).unwrap()
}

pub fn dist(entries: &[(&str, f64)]) -> BTreeMap<Code, f64> {
    entries.iter().map(|(k, p)| (c(k), *p)).collect()
}

pub fn chain(from: &str, to: &[(&str, f64)]) -> (Code, BTreeMap<Code, f64>) {
    (c(from), dist(to))
}

/// One condition, procedures p1 then p2, diagnoses d1 then d2.
pub fn deterministic_spec() -> GeneratorSpec {
    GeneratorSpec {
        conditions: vec![Condition {
            name: "only".into(),
            prior: 1.0,
            initial: dist(&[("p1", 1.0)]),
            transitions: [chain("p1", &[("p2", 1.0)])].into_iter().collect(),
            stop_probability: 0.0,
            stop_overrides: dist(&[("p2", 1.0)]),
            diagnoses: vec![dist(&[("d1", 1.0)]), dist(&[("d2", 1.0)])],
        }],
        seed: 11,
        max_procedures: 4,
    }
}

/// Two conditions sharing a start code `s`; the second procedure names
/// the condition.
pub fn two_condition_spec() -> GeneratorSpec {
    let cond = |name: &str, second: &str, dx: &str| Condition {
        name: name.into(),
        prior: 0.5,
        initial: dist(&[("s", 1.0)]),
        transitions: [chain("s", &[(second, 1.0)]), chain(second, &[("r", 1.0)])]
            .into_iter()
            .collect(),
        stop_probability: 0.0,
        stop_overrides: dist(&[("r", 1.0)]),
        diagnoses: vec![dist(&[(dx, 1.0)])],
    };
    GeneratorSpec {
        conditions: vec![cond("a", "qa", "da"), cond("b", "qb", "db")],
        seed: 5,
        max_procedures: 3,
    }
}

pub fn untrained_model(corpus: &Corpus) -> Seq2SeqModel {
    let mut config = ModelConfig::new(corpus.proc_vocab().len(), corpus.diag_vocab().len());
    config.embed_dim = 6;
    config.hidden_dim = 8;
    Seq2SeqModel::new(config).unwrap()
}

pub fn cs<S: AsRef<str>>(items: &[S]) -> Vec<Code> {
    medentropy::corpus::codes(items).unwrap()
}
