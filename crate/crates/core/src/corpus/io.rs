use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::corpus::{Admission, Code, Corpus};
use crate::error::{Error, Result};

/// Counters for rows or admissions skipped while loading.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub admissions: usize,
    /// JSONL lines with an empty procedure or diagnosis list.
    pub rejected_empty: usize,
    /// CSV rows whose `seq_num` is not an integer.
    pub rejected_rows: usize,
    /// CSV rows with an ICD version other than 9.
    pub filtered_version: usize,
    /// Admissions present in only one of the two CSV files.
    pub dropped_admissions: usize,
}

/// Reads a JSONL corpus: one object per line with `admission_id`,
/// `procedures` and `diagnoses`.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<(Corpus, LoadSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (admissions, mut summary) = read_jsonl(file)?;
    summary.admissions = admissions.len();
    Ok((Corpus::new(admissions, 1)?, summary))
}

/// Parses JSONL admissions from any reader without building vocabularies.
pub fn read_jsonl(reader: impl Read) -> Result<(Vec<Admission>, LoadSummary)> {
    let mut summary = LoadSummary::default();
    let mut admissions = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let adm = parse_line(&line).map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        if adm.procedures.is_empty() || adm.diagnoses.is_empty() {
            summary.rejected_empty += 1;
            continue;
        }
        if let Some(prev) = ids.insert(adm.id.clone(), line_no) {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "duplicate admission_id {:?} (first seen on line {prev})",
                    adm.id
                ),
            });
        }
        admissions.push(adm);
    }
    summary.admissions = admissions.len();
    Ok((admissions, summary))
}

fn parse_line(line: &str) -> std::result::Result<Admission, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let field = |name: &str| {
        obj.get(name)
            .ok_or_else(|| format!("missing field `{name}`"))
    };
    let id = field("admission_id")?
        .as_str()
        .ok_or("`admission_id` must be a string")?
        .to_string();
    let list = |name: &str| -> std::result::Result<Vec<Code>, String> {
        field(name)?
            .as_array()
            .ok_or_else(|| format!("`{name}` must be an array of strings"))?
            .iter()
            .map(|v| {
                let s = v
                    .as_str()
                    .ok_or_else(|| format!("`{name}` must be an array of strings"))?;
                Code::new(s).map_err(|e| e.to_string())
            })
            .collect()
    };
    let procedures = list("procedures")?;
    let diagnoses = list("diagnoses")?;
    Ok(Admission::new(id, procedures, diagnoses))
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    admission_id: &'a str,
    procedures: &'a [Code],
    diagnoses: &'a [Code],
}

/// Writes admissions in the JSONL corpus format, one per line, in order.
pub fn write_jsonl(admissions: &[Admission], mut out: impl Write) -> Result<()> {
    for adm in admissions {
        let record = JsonlRecord {
            admission_id: &adm.id,
            procedures: &adm.procedures,
            diagnoses: &adm.diagnoses,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}

const MIMIC_COLUMNS: [&str; 4] = ["hadm_id", "seq_num", "icd_code", "icd_version"];

type Grouped = BTreeMap<String, Vec<(i64, Code)>>;

/// Reads MIMIC-style `procedures_icd` / `diagnoses_icd` CSV files.
///
/// Only ICD-9 rows are kept. Codes are grouped by `hadm_id` and ordered by
/// `seq_num`; admissions missing either list are dropped.
pub fn load_mimic_csv(
    procedures_path: impl AsRef<Path>,
    diagnoses_path: impl AsRef<Path>,
) -> Result<(Corpus, LoadSummary)> {
    let mut summary = LoadSummary::default();
    let procs = read_mimic_table(procedures_path.as_ref(), &mut summary)?;
    let mut diags = read_mimic_table(diagnoses_path.as_ref(), &mut summary)?;

    let mut admissions = Vec::new();
    for (hadm_id, rows) in procs {
        match diags.remove(&hadm_id) {
            Some(drows) => admissions.push(Admission::new(hadm_id, ordered(rows), ordered(drows))),
            None => summary.dropped_admissions += 1,
        }
    }
    summary.dropped_admissions += diags.len();
    summary.admissions = admissions.len();
    if admissions.is_empty() {
        return Err(Error::invalid(
            "no admission has both procedures and diagnoses",
        ));
    }
    Ok((Corpus::new(admissions, 1)?, summary))
}

fn ordered(mut rows: Vec<(i64, Code)>) -> Vec<Code> {
    rows.sort_by_key(|(seq, _)| *seq);
    rows.into_iter().map(|(_, c)| c).collect()
}

fn read_mimic_table(path: &Path, summary: &mut LoadSummary) -> Result<Grouped> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(MIMIC_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let [hadm, seq, code, version] = idx;

    let mut grouped = Grouped::new();
    for record in reader.records() {
        let record = record?;
        if record.get(version) != Some("9") {
            summary.filtered_version += 1;
            continue;
        }
        let Ok(seq_num) = record.get(seq).unwrap_or("").parse::<i64>() else {
            summary.rejected_rows += 1;
            continue;
        };
        let Ok(code) = Code::new(record.get(code).unwrap_or("")) else {
            summary.rejected_rows += 1;
            continue;
        };
        let hadm_id = record.get(hadm).unwrap_or("").to_string();
        grouped.entry(hadm_id).or_default().push((seq_num, code));
    }
    Ok(grouped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn minimal_line() {
        let src = r#"{"admission_id":"a1","procedures":["p1"],"diagnoses":["d1"]}"#;
        let (adms, summary) = read_jsonl(Cursor::new(src)).unwrap();
        assert_eq!(adms.len(), 1);
        assert_eq!(summary.rejected_empty, 0);
        let corpus = Corpus::new(adms, 1).unwrap();
        assert_eq!(corpus.proc_vocab().len(), 5);
    }

    #[test]
    fn missing_field_names_line() {
        let src = r#"{"admission_id":"a1","procedures":["p1"]}"#;
        let err = read_jsonl(Cursor::new(src)).unwrap_err().to_string();
        assert!(err.starts_with("line 1: missing field"), "{err}");
    }

    #[test]
    fn malformed_json_names_line() {
        let src = "{\"admission_id\":\"a1\",\"procedures\":[\"p1\"],\"diagnoses\":[\"d\"]}\n{oops";
        let err = read_jsonl(Cursor::new(src)).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
    }

    #[test]
    fn empty_lists_counted_not_fatal() {
        let src = concat!(
            r#"{"admission_id":"a1","procedures":[],"diagnoses":["d1"]}"#,
            "\n",
            r#"{"admission_id":"a2","procedures":["p"],"diagnoses":[]}"#,
            "\n",
            r#"{"admission_id":"a3","procedures":["p"],"diagnoses":["d"]}"#,
        );
        let (adms, summary) = read_jsonl(Cursor::new(src)).unwrap();
        assert_eq!(adms.len(), 1);
        assert_eq!(summary.rejected_empty, 2);
    }

    #[test]
    fn round_trip_preserves_order() {
        let src = concat!(
            r#"{"admission_id":"b","procedures":["p2","p1","p2"],"diagnoses":["d1"]}"#,
            "\n",
            r#"{"admission_id":"a","procedures":["p1"],"diagnoses":["d2","d1"]}"#,
            "\n",
        );
        let (adms, _) = read_jsonl(Cursor::new(src)).unwrap();
        let mut out = Vec::new();
        write_jsonl(&adms, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }
}
