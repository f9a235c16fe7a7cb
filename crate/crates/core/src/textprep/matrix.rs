//! Sparse document-term matrix (compressed rows) and its vocabulary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Ordered, unique term list with its inverse index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from terms; they are sorted and deduplicated so column order is lexicographic.
    pub fn new(terms: impl IntoIterator<Item = String>) -> Self {
        let mut terms: Vec<String> = terms.into_iter().collect();
        terms.sort();
        terms.dedup();
        Self::from_sorted(terms)
    }

    fn from_sorted(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Keep the listed columns (ascending ids).
    pub fn subset(&self, keep: &[usize]) -> Vocabulary {
        Self::from_sorted(keep.iter().map(|&i| self.terms[i].clone()).collect())
    }

    /// Hex SHA-256 prefix over the ordered terms; binds models to a term space.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        digest.iter().take(16).fold(String::with_capacity(32), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// What the stored values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    RawCount,
    IdfWeighted,
}

impl Weighting {
    fn as_str(self) -> &'static str {
        match self {
            Weighting::RawCount => "raw_count",
            Weighting::IdfWeighted => "idf_weighted",
        }
    }
}

/// Borrowed view of one document row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
    pub norm: f64,
}

impl Row<'_> {
    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Sparse nonnegative n x p matrix; only strictly positive entries are stored and
/// column indices within a row are increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    n_docs: usize,
    vocabulary: Vocabulary,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    weighting: Weighting,
    doc_norms: Vec<f64>,
}

fn norm(values: &[f64]) -> f64 {
    // scaled to avoid overflow on huge weights; exact enough for 1e-12 relative
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v / max) * (v / max)).sum();
    max * s.sqrt()
}

impl DocTermMatrix {
    /// Build from per-document sparse rows `(term id, value)`. Zero values are dropped,
    /// duplicate ids within a row are summed.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        vocabulary: Vocabulary,
        weighting: Weighting,
    ) -> Result<Self> {
        let p = vocabulary.len();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (j, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(i, _)| i);
            let start = indices.len();
            for (i, v) in row {
                if i >= p {
                    return Err(Error::InvalidArgument(format!(
                        "row {j}: term id {i} out of range for {p} terms"
                    )));
                }
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "row {j}: entry {v} is not a finite nonnegative value"
                    )));
                }
                if v == 0.0 {
                    continue;
                }
                if indices.len() > start && *indices.last().unwrap() as usize == i {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(i as u32);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let n_docs = indptr.len() - 1;
        let mut m = DocTermMatrix {
            n_docs,
            vocabulary,
            indptr,
            indices,
            values,
            weighting,
            doc_norms: Vec::new(),
        };
        m.recompute_norms();
        Ok(m)
    }

    /// Dense construction, for tests and small fixtures.
    pub fn from_dense(rows: &[Vec<f64>], vocabulary: Vocabulary, weighting: Weighting) -> Result<Self> {
        let sparse = rows
            .iter()
            .map(|r| r.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect())
            .collect();
        Self::from_rows(sparse, vocabulary, weighting)
    }

    fn recompute_norms(&mut self) {
        self.doc_norms = (0..self.n_docs)
            .map(|j| norm(&self.values[self.indptr[j]..self.indptr[j + 1]]))
            .collect();
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn doc_norms(&self) -> &[f64] {
        &self.doc_norms
    }

    pub fn row(&self, j: usize) -> Row<'_> {
        let (a, b) = (self.indptr[j], self.indptr[j + 1]);
        Row {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
            norm: self.doc_norms[j],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.n_docs).map(|j| self.row(j))
    }

    /// Ids of all-zero rows.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.n_docs).filter(|&j| self.row(j).is_zero()).collect()
    }

    /// Number of documents in which each term has a positive entry.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.n_terms()];
        for &i in &self.indices {
            df[i as usize] += 1;
        }
        df
    }

    /// Per-column sums.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_terms()];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            s[i as usize] += v;
        }
        s
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_dense(self.n_terms())).collect()
    }

    /// Keep the given columns (ids into the current vocabulary); row norms are recomputed.
    pub fn select_columns(&self, keep: &[usize]) -> DocTermMatrix {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![u32::MAX; self.n_terms()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new as u32;
        }
        self.remap_columns(&remap, self.vocabulary.subset(&keep), self.weighting)
    }

    /// Rebuild with `remap[old] = new` (`u32::MAX` drops the column) over `vocabulary`.
    pub(crate) fn remap_columns(&self, remap: &[u32], vocabulary: Vocabulary, weighting: Weighting) -> DocTermMatrix {
        let mut indptr = Vec::with_capacity(self.n_docs + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for j in 0..self.n_docs {
            let row = self.row(j);
            let mut entries: Vec<(u32, f64)> = row
                .indices
                .iter()
                .zip(row.values)
                .filter_map(|(&i, &v)| {
                    let n = remap[i as usize];
                    (n != u32::MAX).then_some((n, v))
                })
                .collect();
            entries.sort_by_key(|&(i, _)| i);
            for (i, v) in entries {
                indices.push(i);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        let mut m = DocTermMatrix {
            n_docs: self.n_docs,
            vocabulary,
            indptr,
            indices,
            values,
            weighting,
            doc_norms: Vec::new(),
        };
        m.recompute_norms();
        m
    }

    /// Apply `f(term, value)` to every stored entry; results that are not positive are dropped.
    pub(crate) fn map_values(&self, weighting: Weighting, f: impl Fn(usize, f64) -> f64) -> DocTermMatrix {
        let mut indptr = Vec::with_capacity(self.n_docs + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for j in 0..self.n_docs {
            for (i, v) in self.row(j).iter() {
                let w = f(i, v);
                if w > 0.0 {
                    indices.push(i as u32);
                    values.push(w);
                }
            }
            indptr.push(indices.len());
        }
        let mut m = DocTermMatrix {
            n_docs: self.n_docs,
            vocabulary: self.vocabulary.clone(),
            indptr,
            indices,
            values,
            weighting,
            doc_norms: Vec::new(),
        };
        m.recompute_norms();
        m
    }

    /// Reorder rows: row `j` of the result is row `order[j]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> DocTermMatrix {
        let rows = order
            .iter()
            .map(|&j| self.row(j).iter().collect())
            .collect();
        DocTermMatrix::from_rows(rows, self.vocabulary.clone(), self.weighting)
            .expect("rows come from a valid matrix")
    }

    /// Keep the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DocTermMatrix {
        self.permute_rows(rows)
    }

    /// Write the text triplet format:
    ///
    /// ```text
    /// %%cosmix-matrix v1
    /// <n_docs> <n_terms> <raw_count|idf_weighted>
    /// %%vocabulary
    /// <one term per line, column order>
    /// %%entries
    /// <doc_id> <term_id> <value>
    /// ```
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "%%cosmix-matrix v1").map_err(io)?;
        writeln!(w, "{} {} {}", self.n_docs, self.n_terms(), self.weighting.as_str()).map_err(io)?;
        writeln!(w, "%%vocabulary").map_err(io)?;
        for t in self.vocabulary.terms() {
            writeln!(w, "{t}").map_err(io)?;
        }
        writeln!(w, "%%entries").map_err(io)?;
        for j in 0..self.n_docs {
            for (i, v) in self.row(j).iter() {
                writeln!(w, "{j} {i} {v}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("matrix file: {m}"));
        let mut lines = raw.lines();
        if lines.next().map(str::trim) != Some("%%cosmix-matrix v1") {
            return Err(bad("missing %%cosmix-matrix v1 header"));
        }
        let header = lines.next().ok_or_else(|| bad("missing size line"))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad n_docs"))?;
        let p: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad n_terms"))?;
        let weighting = match parts.next() {
            Some("raw_count") => Weighting::RawCount,
            Some("idf_weighted") => Weighting::IdfWeighted,
            _ => return Err(bad("bad weighting")),
        };
        if lines.next().map(str::trim) != Some("%%vocabulary") {
            return Err(bad("missing %%vocabulary section"));
        }
        let mut terms = Vec::with_capacity(p);
        for _ in 0..p {
            terms.push(lines.next().ok_or_else(|| bad("truncated vocabulary"))?.to_string());
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("vocabulary is not strictly sorted"));
        }
        let vocabulary = Vocabulary::from_sorted(terms);
        if lines.next().map(str::trim) != Some("%%entries") {
            return Err(bad("missing %%entries section"));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let (Some(j), Some(i), Some(v)) = (f.next(), f.next(), f.next()) else {
                return Err(bad(&format!("bad entry line {line:?}")));
            };
            let j: usize = j.parse().map_err(|_| bad("bad doc id"))?;
            let i: usize = i.parse().map_err(|_| bad("bad term id"))?;
            let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
            if j >= n {
                return Err(bad(&format!("doc id {j} out of range")));
            }
            rows[j].push((i, v));
        }
        Self::from_rows(rows, vocabulary, weighting)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(ts: &[&str]) -> Vocabulary {
        Vocabulary::new(ts.iter().map(|s| s.to_string()))
    }

    #[test]
    fn vocabulary_is_sorted_and_inverse() {
        let v = vocab(&["mean", "test", "bayes", "mean"]);
        assert_eq!(v.terms(), ["bayes", "mean", "test"]);
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
        assert_ne!(v.fingerprint(), vocab(&["bayes", "mean"]).fingerprint());
        assert_eq!(v.fingerprint().len(), 32);
    }

    #[test]
    fn norms_and_zero_rows() {
        let m = DocTermMatrix::from_dense(
            &[vec![3.0, 4.0], vec![0.0, 0.0]],
            vocab(&["a", "b"]),
            Weighting::RawCount,
        )
        .unwrap();
        assert_eq!(m.doc_norms(), &[5.0, 0.0]);
        assert_eq!(m.zero_rows(), vec![1]);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn select_columns_reindexes() {
        let m = DocTermMatrix::from_dense(
            &[vec![1.0, 2.0, 3.0]],
            vocab(&["a", "b", "c"]),
            Weighting::RawCount,
        )
        .unwrap();
        let s = m.select_columns(&[2, 0]);
        assert_eq!(s.vocabulary().terms(), ["a", "c"]);
        assert_eq!(s.to_dense(), vec![vec![1.0, 3.0]]);
        assert!((s.doc_norms()[0] - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn file_round_trip() {
        let m = DocTermMatrix::from_dense(
            &[vec![0.1, 0.0, 2.0 / 3.0], vec![0.0, 0.0, 0.0], vec![1e-300, 7.5, 0.0]],
            vocab(&["x", "y", "z"]),
            Weighting::IdfWeighted,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        m.write(&p).unwrap();
        assert_eq!(DocTermMatrix::read(&p).unwrap(), m);
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(DocTermMatrix::from_dense(&[vec![-1.0]], vocab(&["a"]), Weighting::RawCount).is_err());
    }
}
