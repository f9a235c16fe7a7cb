use std::path::PathBuf;

use cosmix::ingest::{ingest_path, parse_bibtex, parse_ris, EpochScheme, ExclusionRules};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/ingest").join(name)
}

fn check(parsed: cosmix::ingest::Parsed, expected_file: &str) {
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(data(expected_file)).unwrap()).unwrap();
    let want = expected["records"].as_array().unwrap();
    assert_eq!(parsed.records.len(), want.len(), "record count");
    for (got, want) in parsed.records.iter().zip(want) {
        assert_eq!(&serde_json::to_value(got).unwrap(), want);
    }
    let lines: Vec<u64> = parsed.diagnostics.iter().map(|d| d.line as u64).collect();
    let want_lines: Vec<u64> = expected["diagnostic_lines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(lines, want_lines, "{:#?}", parsed.diagnostics);
}

#[test]
fn bibtex_fixture() {
    let raw = std::fs::read(data("sample.bib")).unwrap();
    check(parse_bibtex(&raw).unwrap(), "sample.bib.expected.json");
}

#[test]
fn ris_fixture() {
    let raw = std::fs::read(data("sample.ris")).unwrap();
    check(parse_ris(&raw).unwrap(), "sample.ris.expected.json");
}

#[test]
fn default_exclusions_on_fixtures() {
    let ing = ingest_path(
        &[data("sample.bib"), data("sample.ris")],
        &ExclusionRules::default(),
        &EpochScheme::default(),
    )
    .unwrap();
    assert_eq!(ing.records_parsed, 42);
    let titles: Vec<&str> = ing.corpus.documents.iter().map(|d| d.text.as_str()).collect();
    for gone in ["Editorial", "A Conversation with", "Book Review", "Review of a Book", "An Entry Without Abstract", "No Abstract Here"] {
        assert!(!titles.iter().any(|t| t.starts_with(gone)), "{gone} kept");
    }
    // 21 + 21 records, minus 2 editorials, 2 reviews, 1 conversation and 2 without abstract
    assert_eq!(ing.corpus.documents.len(), 35);
    let ids: Vec<usize> = ing.corpus.documents.iter().map(|d| d.doc_id).collect();
    assert_eq!(ids, (0..35).collect::<Vec<_>>());
}
