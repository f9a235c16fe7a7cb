//! Term selection by normalized Shannon entropy of each term's distribution
//! over documents.
//!
//! For term `h`, `f_jh = x_jh / sum_j x_jh` and
//! `H_h = -sum_j f_jh ln f_jh / ln n`, so a term confined to one document
//! scores 0 and a term spread evenly over all documents scores 1. Scaling a
//! column by a constant leaves `H_h` unchanged, which is why IDF weighting
//! does not affect the score.

use std::cmp::Ordering;

use serde::Serialize;

use crate::textprep::{DocTermMatrix, Vocabulary};
use crate::{Error, Result};

/// Entropy per term, aligned to the vocabulary it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    #[serde(skip)]
    vocabulary: Vocabulary,
    pub h: Vec<f64>,
}

impl EntropyProfile {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn of(&self, term: &str) -> Option<f64> {
        self.vocabulary.id(term).map(|i| self.h[i])
    }

    /// Histogram over `[0, 1]` with `bins` equal-width bins; the last bin is closed.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, usize)> {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        for &h in &self.h {
            let b = ((h * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| (b as f64 / bins as f64, c))
            .collect()
    }

    /// CSV with header `bin,count`; `bin` is the lower edge.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let mut s = String::from("bin,count\n");
        for (lo, c) in self.histogram(bins) {
            s.push_str(&format!("{lo},{c}\n"));
        }
        s
    }

    fn lookup(&self, matrix: &DocTermMatrix) -> Result<Vec<f64>> {
        matrix
            .vocabulary()
            .terms()
            .iter()
            .map(|t| {
                self.of(t).ok_or_else(|| {
                    Error::InvalidArgument(format!("term {t:?} has no entropy score"))
                })
            })
            .collect()
    }
}

/// Normalized entropy of every column.
pub fn term_entropy(matrix: &DocTermMatrix) -> Result<EntropyProfile> {
    let n = matrix.n_docs();
    if n < 2 {
        return Err(Error::SingleDocumentEntropy);
    }
    let totals = matrix.column_sums();
    let mut acc = vec![0.0f64; matrix.n_terms()];
    for row in matrix.rows() {
        for (h, v) in row.iter() {
            let f = v / totals[h];
            if f > 0.0 {
                acc[h] -= f * f.ln();
            }
        }
    }
    let ln_n = (n as f64).ln();
    let h = acc
        .into_iter()
        .zip(&totals)
        .map(|(a, &t)| if t > 0.0 { (a / ln_n).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Ok(EntropyProfile {
        vocabulary: matrix.vocabulary().clone(),
        h,
    })
}

/// Keep columns with `H >= tau`.
pub fn select_by_threshold(matrix: &DocTermMatrix, profile: &EntropyProfile, tau: f64) -> Result<DocTermMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("entropy threshold {tau} outside [0, 1]")));
    }
    let h = profile.lookup(matrix)?;
    let keep: Vec<usize> = (0..matrix.n_terms()).filter(|&i| h[i] >= tau).collect();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(matrix.select_columns(&keep))
}

/// Keep the `n_terms` highest-entropy columns; ties go to the lexicographically
/// smaller term. Asking for more columns than exist keeps all of them.
pub fn select_top_n(matrix: &DocTermMatrix, profile: &EntropyProfile, n_terms: usize) -> Result<DocTermMatrix> {
    if n_terms == 0 {
        return Err(Error::InvalidArgument("n_terms must be at least 1".into()));
    }
    let p = matrix.n_terms();
    if n_terms > p {
        log::warn!("requested {n_terms} terms but only {p} exist; keeping all");
    }
    let h = profile.lookup(matrix)?;
    let vocab = matrix.vocabulary();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        h[b].partial_cmp(&h[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    order.truncate(n_terms.min(p));
    Ok(matrix.select_columns(&order))
}
