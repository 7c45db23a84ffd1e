use std::collections::HashMap;

use crate::corpus::{fnv1a, Admission, Code};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Names of the reserved slots, in index order.
pub const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

/// Bijective code ↔ index map with four reserved slots in front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    index_to_code: Vec<String>,
    code_to_index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from an explicit ordered code list (reserved
    /// slots are prepended).
    pub fn from_codes<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index_to_code: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut code_to_index = HashMap::new();
        for code in codes {
            let code = code.into();
            if RESERVED.contains(&code.as_str()) {
                return Err(Error::invalid(format!(
                    "code {code:?} collides with a reserved token"
                )));
            }
            if code_to_index
                .insert(code.clone(), index_to_code.len())
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "duplicate vocabulary entry {code:?}"
                )));
            }
            index_to_code.push(code);
        }
        Ok(Vocab {
            index_to_code,
            code_to_index,
        })
    }

    /// Index of `code`, or [`UNK`] when it is not in the vocabulary.
    pub fn index_of(&self, code: &str) -> usize {
        self.code_to_index.get(code).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, code: &str) -> Option<usize> {
        self.code_to_index.get(code).copied()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.code_to_index.contains_key(code)
    }

    pub fn encode(&self, codes: &[Code]) -> Vec<usize> {
        codes.iter().map(|c| self.index_of(c.as_str())).collect()
    }

    /// Token at `index` (reserved tokens render as `<pad>` and friends).
    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_code.get(index).map(String::as_str)
    }

    /// Total size including the reserved slots.
    pub fn len(&self) -> usize {
        self.index_to_code.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of real (non-reserved) codes.
    pub fn n_codes(&self) -> usize {
        self.index_to_code.len() - RESERVED.len()
    }

    /// Non-reserved codes in index order.
    pub fn codes(&self) -> impl Iterator<Item = &str> + '_ {
        self.index_to_code[RESERVED.len()..]
            .iter()
            .map(String::as_str)
    }

    /// FNV-1a over every token in index order, each followed by `\n`.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        for token in &self.index_to_code {
            buf.extend_from_slice(token.as_bytes());
            buf.push(b'\n');
        }
        fnv1a(&buf)
    }
}

/// Builds the procedure and diagnosis vocabularies.
///
/// Codes seen fewer than `min_count` times are left out (and so map to UNK).
/// Indices are assigned by descending frequency, ties broken
/// lexicographically, which makes the result independent of admission order.
pub fn build_vocabs(admissions: &[Admission], min_count: usize) -> Result<(Vocab, Vocab)> {
    if admissions.is_empty() {
        return Err(Error::invalid(
            "cannot build vocabularies from zero admissions",
        ));
    }
    if min_count < 1 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let procs = ranked(admissions.iter().flat_map(|a| &a.procedures), min_count);
    let diags = ranked(admissions.iter().flat_map(|a| &a.diagnoses), min_count);
    Ok((Vocab::from_codes(procs)?, Vocab::from_codes(diags)?))
}

fn ranked<'a>(codes: impl Iterator<Item = &'a Code>, min_count: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in codes {
        *counts.entry(c.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.into_iter().map(|(c, _)| c.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::codes;
    use proptest::prelude::*;

    fn adm(p: &[&str], d: &[&str]) -> Admission {
        Admission::new("x", codes(p).unwrap(), codes(d).unwrap())
    }

    #[test]
    fn threshold_maps_rare_codes_to_unk() {
        let adms = vec![adm(&["p1", "p1", "p2"], &["d1"]), adm(&["p1"], &["d1"])];
        let (procs, _) = build_vocabs(&adms, 2).unwrap();
        assert_eq!(procs.len(), 5);
        assert_eq!(procs.index_of("p1"), 4);
        assert_eq!(procs.index_of("p2"), UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let adms = vec![adm(&["p2", "p1"], &["d1"])];
        let (procs, _) = build_vocabs(&adms, 1).unwrap();
        assert_eq!(procs.index_of("p1"), 4);
        assert_eq!(procs.index_of("p2"), 5);
    }

    #[test]
    fn reserved_slots_fixed() {
        let v = Vocab::from_codes(["a"]).unwrap();
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(SOS), Some("<sos>"));
        assert_eq!(v.token(EOS), Some("<eos>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
        assert_eq!(v.n_codes(), 1);
        assert!(Vocab::from_codes(["<eos>"]).is_err());
    }

    #[test]
    fn empty_admissions_error() {
        assert!(build_vocabs(&[], 1).is_err());
    }

    #[test]
    fn fingerprint_depends_on_order() {
        let a = Vocab::from_codes(["x", "y"]).unwrap();
        let b = Vocab::from_codes(["y", "x"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(
            a.fingerprint(),
            Vocab::from_codes(["x", "y"]).unwrap().fingerprint()
        );
    }

    proptest! {
        #[test]
        fn vocab_is_permutation_invariant(
            seqs in prop::collection::vec(
                (prop::collection::vec(0u8..6, 1..5), prop::collection::vec(0u8..4, 1..3)),
                1..12,
            ),
            min_count in 1usize..3,
            rot in 0usize..12,
        ) {
            let adms: Vec<Admission> = seqs
                .iter()
                .map(|(p, d)| {
                    let p: Vec<String> = p.iter().map(|x| format!("p{x}")).collect();
                    let d: Vec<String> = d.iter().map(|x| format!("d{x}")).collect();
                    adm(&p.iter().map(String::as_str).collect::<Vec<_>>(),
                        &d.iter().map(String::as_str).collect::<Vec<_>>())
                })
                .collect();
            let mut shuffled = adms.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(build_vocabs(&adms, min_count).unwrap(), build_vocabs(&shuffled, min_count).unwrap());
        }
    }
}
