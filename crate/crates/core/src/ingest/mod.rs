//! Bibliography ingestion: BibTeX, RIS and plain-text directories become
//! epoch-tagged documents holding the title followed by the abstract.

mod bibtex;
mod corpus_io;
mod latex;
mod ris;

use serde::{Deserialize, Serialize};

pub use bibtex::parse_bibtex;
pub use corpus_io::{ingest_path, Ingested, read_corpus_jsonl, read_text_dir, write_corpus_jsonl, CORPUS_EXTENSIONS};
pub use latex::strip_latex;
pub use ris::parse_ris;

/// Publication kind, as far as the bibliography export tells us.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Article,
    Editorial,
    Review,
    Comment,
    Other,
}

impl EntryKind {
    /// Classify a free-form type hint (BibTeX entry type, `type` field, RIS `TY`/`M3`).
    pub fn from_hint(hint: &str) -> EntryKind {
        let h = hint.trim().to_ascii_lowercase();
        if h.is_empty() {
            return EntryKind::Other;
        }
        if h.contains("editorial") || h.contains("frontmatter") || h.contains("front matter") {
            EntryKind::Editorial
        } else if h.contains("review") {
            EntryKind::Review
        } else if ["comment", "discussion", "rejoinder", "reply", "correction", "erratum"]
            .iter()
            .any(|k| h.contains(k))
        {
            EntryKind::Comment
        } else if matches!(h.as_str(), "article" | "jour" | "jfull" | "ejour" | "abst" | "mgzn") {
            EntryKind::Article
        } else {
            EntryKind::Other
        }
    }
}

/// One bibliography entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub entry_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub year: Option<i32>,
    pub journal: String,
    pub kind: EntryKind,
}

/// A problem found while parsing; the offending entry is skipped or salvaged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Byte offset of the entry start in the input.
    pub offset: usize,
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn at(input: &str, offset: usize, message: impl Into<String>) -> Self {
        let line = input.as_bytes()[..offset.min(input.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        Diagnostic {
            offset,
            line,
            message: message.into(),
        }
    }
}

/// Output of a bibliography parser.
#[derive(Debug, Clone, Default)]
pub struct Parsed {
    pub records: Vec<Record>,
    pub diagnostics: Vec<Diagnostic>,
}

/// One document of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: usize,
    pub text: String,
    pub epoch: Option<String>,
    pub journal: Option<String>,
}

/// Which records are kept for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionRules {
    /// Case-insensitive title prefixes to drop.
    pub title_prefixes: Vec<String>,
    /// Drop records without an abstract.
    pub require_abstract: bool,
    /// Drop records of these kinds regardless of abstract.
    pub excluded_kinds: Vec<EntryKind>,
}

impl Default for ExclusionRules {
    fn default() -> Self {
        ExclusionRules {
            title_prefixes: vec![
                "A conversation with".to_string(),
                "Studies in the History of Statistics and Probability".to_string(),
            ],
            require_abstract: true,
            excluded_kinds: vec![EntryKind::Editorial, EntryKind::Review],
        }
    }
}

impl ExclusionRules {
    /// Rules that keep everything.
    pub fn none() -> Self {
        ExclusionRules {
            title_prefixes: Vec::new(),
            require_abstract: false,
            excluded_kinds: Vec::new(),
        }
    }

    pub fn keeps(&self, record: &Record) -> bool {
        if self.require_abstract
            && record
                .abstract_text
                .as_deref()
                .is_none_or(|a| a.trim().is_empty())
        {
            return false;
        }
        if self.excluded_kinds.contains(&record.kind) {
            return false;
        }
        let title = record.title.trim().to_lowercase();
        !self
            .title_prefixes
            .iter()
            .any(|p| title.starts_with(&p.trim().to_lowercase()))
    }
}

/// Filter records, preserving order.
pub fn filter_records(records: Vec<Record>, rules: &ExclusionRules) -> Vec<Record> {
    records.into_iter().filter(|r| rules.keeps(r)).collect()
}

/// An inclusive year span with a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSpan {
    pub label: String,
    pub start: i32,
    pub end: i32,
}

/// Maps publication years to epoch labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochScheme {
    pub spans: Vec<EpochSpan>,
}

impl Default for EpochScheme {
    fn default() -> Self {
        let spans = [(1970, 1979), (1980, 1989), (1990, 1999), (2000, 2009), (2010, 2015)]
            .into_iter()
            .map(|(start, end)| EpochSpan {
                label: format!("{start}-{end}"),
                start,
                end,
            })
            .collect();
        EpochScheme { spans }
    }
}

impl EpochScheme {
    pub fn epoch_of(&self, year: i32) -> Option<&str> {
        self.spans
            .iter()
            .find(|s| s.start <= year && year <= s.end)
            .map(|s| s.label.as_str())
    }

    /// Parse `label:start-end` items separated by commas, e.g. `early:1970-1989,late:1990-2015`.
    pub fn parse(spec: &str) -> crate::Result<Self> {
        let mut spans = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || crate::Error::InvalidArgument(format!("bad epoch span {item:?}"));
            let (label, range) = match item.split_once(':') {
                Some((l, r)) => (l.trim().to_string(), r),
                None => (item.to_string(), item),
            };
            let (a, b) = range.split_once('-').ok_or_else(bad)?;
            let start: i32 = a.trim().parse().map_err(|_| bad())?;
            let end: i32 = b.trim().parse().map_err(|_| bad())?;
            if start > end {
                return Err(bad());
            }
            spans.push(EpochSpan { label, start, end });
        }
        if spans.is_empty() {
            return Err(crate::Error::InvalidArgument("empty epoch scheme".into()));
        }
        Ok(EpochScheme { spans })
    }

    /// Epoch labels in scheme order.
    pub fn labels(&self) -> Vec<String> {
        self.spans.iter().map(|s| s.label.clone()).collect()
    }
}

/// A corpus plus the warnings raised while building it.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub warnings: Vec<String>,
}

/// Turn records into documents (title, a space, then the abstract); ids follow input order.
pub fn to_documents(records: &[Record], epoching: &EpochScheme) -> Corpus {
    let mut warnings = Vec::new();
    let documents = records
        .iter()
        .enumerate()
        .map(|(doc_id, r)| {
            let epoch = match r.year {
                Some(y) => {
                    let e = epoching.epoch_of(y).map(str::to_string);
                    if e.is_none() {
                        warnings.push(format!(
                            "record {} (year {y}) falls outside every epoch",
                            r.entry_id
                        ));
                    }
                    e
                }
                None => {
                    warnings.push(format!("record {} has no year", r.entry_id));
                    None
                }
            };
            let text = match r.abstract_text.as_deref() {
                Some(a) if !a.trim().is_empty() => format!("{} {}", r.title.trim(), a.trim()),
                _ => r.title.trim().to_string(),
            };
            Document {
                doc_id,
                text,
                epoch,
                journal: (!r.journal.is_empty()).then(|| r.journal.clone()),
            }
        })
        .collect();
    Corpus {
        documents,
        warnings,
    }
}

/// Parse a leading integer (`"1987/03//"` gives 1987) and accept it as a year in `[1000, 9999]`.
pub(crate) fn parse_year(raw: &str) -> Option<i32> {
    let digits: String = raw
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let y: i32 = digits.parse().ok()?;
    (1000..=9999).contains(&y).then_some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(title: &str, abs: Option<&str>) -> Record {
        Record {
            entry_id: title.to_string(),
            title: title.to_string(),
            abstract_text: abs.map(str::to_string),
            year: Some(1990),
            journal: "J".into(),
            kind: EntryKind::Article,
        }
    }

    #[test]
    fn missing_abstract_is_dropped() {
        let out = filter_records(vec![rec("Tests", None)], &ExclusionRules::default());
        assert!(out.is_empty());
    }

    #[test]
    fn conversation_series_is_dropped() {
        let out = filter_records(
            vec![rec("A Conversation with Someone", Some("life"))],
            &ExclusionRules::default(),
        );
        assert!(out.is_empty());
    }

    #[test]
    fn empty_rules_keep_everything() {
        let recs: Vec<_> = (0..5).map(|i| rec(&format!("t{i}"), None)).collect();
        assert_eq!(filter_records(recs.clone(), &ExclusionRules::none()), recs);
    }

    #[test]
    fn filter_is_idempotent() {
        let recs = vec![
            rec("A conversation with X", Some("a")),
            rec("Kept", Some("abstract")),
            rec("No abstract", None),
        ];
        let rules = ExclusionRules::default();
        let once = filter_records(recs, &rules);
        let twice = filter_records(once.clone(), &rules);
        assert_eq!(once, twice);
        assert_eq!(once.len(), 1);
    }

    #[test]
    fn default_epochs() {
        let s = EpochScheme::default();
        assert_eq!(s.epoch_of(1975), Some("1970-1979"));
        assert_eq!(s.epoch_of(2015), Some("2010-2015"));
        assert_eq!(s.epoch_of(1969), None);
    }

    #[test]
    fn out_of_range_year_warns_and_keeps_cardinality() {
        let mut r = rec("Old", Some("x"));
        r.year = Some(1969);
        let c = to_documents(&[r, rec("New", Some("y"))], &EpochScheme::default());
        assert_eq!(c.documents.len(), 2);
        assert_eq!(c.documents[0].epoch, None);
        assert_eq!(c.documents[1].epoch.as_deref(), Some("1990-1999"));
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.documents[1].text, "New y");
        assert_eq!(c.documents[1].doc_id, 1);
    }

    #[test]
    fn epoch_scheme_parse() {
        let s = EpochScheme::parse("early:1970-1989, late:1990-2015").unwrap();
        assert_eq!(s.epoch_of(1980), Some("early"));
        assert!(EpochScheme::parse("x:1990-1980").is_err());
    }

    #[test]
    fn year_prefix_parse() {
        assert_eq!(parse_year("1987/03//"), Some(1987));
        assert_eq!(parse_year("abc"), None);
        assert_eq!(parse_year("99"), None);
    }

    #[test]
    fn kind_hints() {
        assert_eq!(EntryKind::from_hint("article"), EntryKind::Article);
        assert_eq!(EntryKind::from_hint("JOUR"), EntryKind::Article);
        assert_eq!(EntryKind::from_hint("Book Review"), EntryKind::Review);
        assert_eq!(EntryKind::from_hint("Discussion"), EntryKind::Comment);
        assert_eq!(EntryKind::from_hint("inproceedings"), EntryKind::Other);
    }
}
