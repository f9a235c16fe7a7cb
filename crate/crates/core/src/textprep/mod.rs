//! Text to document-term matrix: tokenize, drop numbers and stopwords, stem,
//! count, and weight by inverse document frequency.

mod matrix;
mod porter;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use matrix::{DocTermMatrix, Row, Vocabulary, Weighting};
pub use porter::stem;

use crate::ingest::Document;
use crate::{Error, Result};

/// Stems shorter than this are discarded.
pub const MIN_STEM_LEN: usize = 2;

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Generic words of the statistical literature removed on top of English stopwords.
pub const DEFAULT_DOMAIN_STOPWORDS: &[&str] = &[
    "variable",
    "variables",
    "statistic",
    "statistics",
    "statistical",
    "analysis",
    "analyses",
    "data",
    "model",
    "models",
];

/// Lowercase alphabetic tokens; anything that is not alphanumeric splits, and
/// tokens containing a digit are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().any(|c| c.is_numeric()))
        .map(str::to_lowercase)
        .collect()
}

/// English and domain stopword sets, matched against raw (unstemmed) tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordPolicy {
    pub english_stopwords: BTreeSet<String>,
    pub domain_stopwords: BTreeSet<String>,
}

impl Default for StopwordPolicy {
    fn default() -> Self {
        StopwordPolicy {
            english_stopwords: ENGLISH_STOPWORDS
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
            domain_stopwords: DEFAULT_DOMAIN_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl StopwordPolicy {
    pub fn empty() -> Self {
        StopwordPolicy {
            english_stopwords: BTreeSet::new(),
            domain_stopwords: BTreeSet::new(),
        }
    }

    /// Default English list plus the words of a domain list file (one per line, `#` comments).
    pub fn with_domain_file(contents: &str) -> Self {
        let mut p = StopwordPolicy::default();
        p.domain_stopwords = contents
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        p
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        token.is_empty() || self.english_stopwords.contains(token) || self.domain_stopwords.contains(token)
    }
}

pub fn remove_stopwords(tokens: Vec<String>, policy: &StopwordPolicy) -> Vec<String> {
    tokens.into_iter().filter(|t| !policy.is_stopword(t)).collect()
}

/// The full per-document pipeline: tokenize, remove stopwords, stem, drop short stems.
pub fn analyze(text: &str, policy: &StopwordPolicy) -> Vec<String> {
    remove_stopwords(tokenize(text), policy)
        .iter()
        .map(|t| stem(t))
        .filter(|s| s.chars().count() >= MIN_STEM_LEN)
        .collect()
}

/// Matrix plus the documents that ended up with no terms.
#[derive(Debug, Clone)]
pub struct BuiltMatrix {
    pub matrix: DocTermMatrix,
    pub empty_docs: Vec<usize>,
}

/// Raw-count matrix over all stems that occur at least once.
pub fn build_matrix(corpus: &[Document], policy: &StopwordPolicy) -> Result<BuiltMatrix> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot build a matrix from an empty corpus".into()));
    }
    let counts: Vec<BTreeMap<String, u32>> = corpus
        .par_iter()
        .map(|d| {
            let mut c = BTreeMap::new();
            for s in analyze(&d.text, policy) {
                *c.entry(s).or_insert(0) += 1;
            }
            c
        })
        .collect();
    let vocabulary = Vocabulary::new(counts.iter().flat_map(|c| c.keys().cloned()));
    let empty_docs = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_empty())
        .map(|(j, _)| j)
        .collect();
    let rows = counts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|(t, n)| (vocabulary.id(&t).expect("term in vocabulary"), n as f64))
                .collect()
        })
        .collect();
    let matrix = DocTermMatrix::from_rows(rows, vocabulary, Weighting::RawCount)?;
    Ok(BuiltMatrix { matrix, empty_docs })
}

/// `ln(n / df)` per column of a raw-count matrix.
pub fn idf_weights(matrix: &DocTermMatrix) -> Vec<f64> {
    let n = matrix.n_docs() as f64;
    matrix
        .document_frequencies()
        .into_iter()
        .map(|df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
        .collect()
}

/// Weight counts by natural-log IDF. Terms present in every document get weight 0
/// and their columns are removed.
pub fn apply_idf(matrix: &DocTermMatrix) -> Result<DocTermMatrix> {
    apply_idf_base(matrix, std::f64::consts::E)
}

/// IDF weighting with an explicit logarithm base.
pub fn apply_idf_base(matrix: &DocTermMatrix, base: f64) -> Result<DocTermMatrix> {
    if matrix.weighting() != Weighting::RawCount {
        return Err(Error::InvalidArgument("apply_idf expects a raw-count matrix".into()));
    }
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidArgument(format!("logarithm base {base} must exceed 1")));
    }
    let log_base = base.ln();
    let idf: Vec<f64> = idf_weights(matrix).into_iter().map(|w| w / log_base).collect();
    let keep: Vec<usize> = (0..matrix.n_terms()).filter(|&h| idf[h] > 0.0).collect();
    let weighted = matrix.map_values(Weighting::IdfWeighted, |h, v| v * idf[h]);
    Ok(weighted.select_columns(&keep))
}
