mod common;

use std::path::PathBuf;

use common::cs;
use medentropy::corpus::{load_jsonl, load_mimic_csv, read_jsonl, write_jsonl, Corpus};
use medentropy::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn three_line_fixture_loads() {
    let (corpus, summary) = load_jsonl(fixture("three.jsonl")).unwrap();
    assert_eq!(corpus.len(), 3);
    assert_eq!(summary.admissions, 3);
    let h3 = corpus.get("h3").unwrap();
    assert_eq!(h3.procedures, cs(&["8856", "3722", "3893"]));
    assert_eq!(h3.primary_diagnosis(), Some(&common::c("78650")));
    // Four distinct procedures plus the reserved tokens.
    assert_eq!(corpus.proc_vocab().n_codes(), 4);
    assert_eq!(corpus.diag_vocab().n_codes(), 5);
}

#[test]
fn jsonl_round_trip_preserves_order() {
    let (corpus, _) = load_jsonl(fixture("three.jsonl")).unwrap();
    let mut buf = Vec::new();
    write_jsonl(corpus.admissions(), &mut buf).unwrap();
    let (again, _) = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(again, corpus.admissions());
    let original = std::fs::read(fixture("three.jsonl")).unwrap();
    assert_eq!(buf, original);
}

#[test]
fn malformed_line_reports_line_number() {
    let text = "{\"admission_id\":\"a\",\"procedures\":[\"1\"],\"diagnoses\":[\"2\"]}\n{\"admission_id\":\"b\",\"procedures\":[\"1\"]}\n";
    match read_jsonl(text.as_bytes()) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("diagnoses"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn empty_lists_are_rejected_and_counted() {
    let text = "{\"admission_id\":\"a\",\"procedures\":[],\"diagnoses\":[\"2\"]}\n{\"admission_id\":\"b\",\"procedures\":[\"1\"],\"diagnoses\":[\"2\"]}\n";
    let (adms, summary) = read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(adms.len(), 1);
    assert_eq!(summary.rejected_empty, 1);
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(
        load_jsonl(fixture("nope.jsonl")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn mimic_csv_filters_sorts_and_joins() {
    let (corpus, summary) =
        load_mimic_csv(fixture("procedures_icd.csv"), fixture("diagnoses_icd.csv")).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(summary.filtered_version, 2);
    // Admission 300 has procedures but no diagnoses.
    assert_eq!(summary.dropped_admissions, 1);
    let a = corpus.get("100").unwrap();
    assert_eq!(a.procedures, cs(&["3893", "8856", "9604"]));
    assert_eq!(a.diagnoses, cs(&["0389", "99592"]));
    assert_eq!(corpus.get("200").unwrap().procedures, cs(&["3722"]));
    assert!(corpus.get("300").is_none());
}

#[test]
fn mimic_csv_requires_columns() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("p.csv");
    std::fs::write(&bad, "hadm_id,seq_num,icd_code\n1,1,3893\n").unwrap();
    match load_mimic_csv(&bad, fixture("diagnoses_icd.csv")) {
        Err(Error::MissingColumn(col)) => assert_eq!(col, "icd_version"),
        other => panic!("expected a missing column, got {other:?}"),
    }
}

#[test]
fn corpus_fingerprint_tracks_content() {
    let (corpus, _) = load_jsonl(fixture("three.jsonl")).unwrap();
    let mut adms = corpus.admissions().to_vec();
    let same = Corpus::new(adms.clone(), 1).unwrap();
    assert_eq!(same.fingerprint(), corpus.fingerprint());
    adms[0].diagnoses.reverse();
    assert_ne!(
        Corpus::new(adms, 1).unwrap().fingerprint(),
        corpus.fingerprint()
    );
}
