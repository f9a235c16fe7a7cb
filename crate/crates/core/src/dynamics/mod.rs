//! Forward evolution of clusters across epochs: documents of epoch `t` are
//! re-expressed over the vocabulary of `t + 1`, projected onto its fitted
//! clusters with only the mixing weights re-estimated, and the resulting
//! migrations become graph edges.

mod graph;

use serde::{Deserialize, Serialize};

pub use graph::{build_evolution_graph, EpochClusters, GraphEdge, GraphNode, MigrationGraph, Strength, Thresholds};

use crate::geometry::{distance_matrix, Centroid};
use crate::mixture::{posteriors_from_distances, EmOptions, Posteriors};
use crate::textprep::{idf_weights, DocTermMatrix, Vocabulary, Weighting};
use crate::{Error, Result};

/// Where a matched column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Source(usize),
    AddedZero,
}

/// How the carried-over counts are weighted.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchWeighting {
    /// IDF from the source epoch's own document frequencies.
    SourceIdf,
    /// The target epoch's IDF weights, aligned to the target vocabulary.
    TargetIdf(Vec<f64>),
    /// Counts as they are.
    RawCounts,
}

/// Epoch-`t` documents over the epoch-`t+1` vocabulary.
#[derive(Debug, Clone)]
pub struct MatchedMatrix {
    pub matrix: DocTermMatrix,
    /// Per target column.
    pub provenance: Vec<Provenance>,
    pub shared_terms: usize,
    /// Documents left without any term after matching.
    pub emptied_docs: Vec<usize>,
}

/// Drop source columns missing from `target`, zero-fill target columns the
/// source never saw, and weight the carried counts. The source matrix holds
/// raw counts.
pub fn match_vocabulary(source: &DocTermMatrix, target: &Vocabulary, weighting: &MatchWeighting) -> Result<MatchedMatrix> {
    if source.weighting() != Weighting::RawCount {
        return Err(Error::InvalidArgument("vocabulary matching expects a raw-count source matrix".into()));
    }
    let provenance: Vec<Provenance> = target
        .terms()
        .iter()
        .map(|t| source.vocabulary().id(t).map_or(Provenance::AddedZero, Provenance::Source))
        .collect();
    let shared_terms = provenance.iter().filter(|p| matches!(p, Provenance::Source(_))).count();
    if shared_terms == 0 {
        return Err(Error::DisjointVocabularies);
    }
    let mut remap = vec![u32::MAX; source.n_terms()];
    for (new, p) in provenance.iter().enumerate() {
        if let Provenance::Source(old) = p {
            remap[*old] = new as u32;
        }
    }
    let carried = source.remap_columns(&remap, target.clone(), Weighting::RawCount);
    let matrix = match weighting {
        MatchWeighting::RawCounts => carried,
        MatchWeighting::SourceIdf => {
            let idf = idf_weights(source);
            carried.map_values(Weighting::IdfWeighted, |h, v| match provenance[h] {
                Provenance::Source(old) => v * idf[old],
                Provenance::AddedZero => 0.0,
            })
        }
        MatchWeighting::TargetIdf(w) => {
            if w.len() != target.len() {
                return Err(Error::DimensionMismatch {
                    expected: target.len(),
                    actual: w.len(),
                });
            }
            carried.map_values(Weighting::IdfWeighted, |h, v| v * w[h])
        }
    };
    let emptied_docs = matrix.zero_rows();
    if !emptied_docs.is_empty() {
        log::info!("{} documents have no terms after vocabulary matching", emptied_docs.len());
    }
    Ok(MatchedMatrix {
        matrix,
        provenance,
        shared_terms,
        emptied_docs,
    })
}

/// Outcome of the weights-only semi-supervised fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiSupervisedFit {
    pub weights: Vec<f64>,
    /// Posteriors of the unlabelled (matched) documents.
    pub posteriors: Posteriors,
    /// Argmax of each unlabelled posterior row.
    pub projected: Vec<usize>,
    /// Objective per iteration, without the `psi(lambda)` term.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit the mixing weights on unlabelled `matched` documents together with
/// `labeled` documents of known cluster, keeping centroids and lambda fixed.
pub fn fit_semisupervised(
    matched: &DocTermMatrix,
    labeled: &DocTermMatrix,
    labels: &[usize],
    centroids: &[Centroid],
    lambda: f64,
    options: EmOptions,
) -> Result<SemiSupervisedFit> {
    let k = centroids.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no centroids".into()));
    }
    if labels.len() != labeled.n_docs() {
        return Err(Error::DimensionMismatch {
            expected: labeled.n_docs(),
            actual: labels.len(),
        });
    }
    if matched.vocabulary() != labeled.vocabulary() {
        return Err(Error::VocabularyMismatch {
            model: labeled.vocabulary().fingerprint(),
            matrix: matched.vocabulary().fingerprint(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be positive")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for k={k}")));
    }
    let n_t = matched.n_docs();
    let n_next = labeled.n_docs();
    if n_t + n_next == 0 {
        return Err(Error::InvalidArgument("no documents".into()));
    }
    let mut labeled_mass = vec![0.0; k];
    for &l in labels {
        labeled_mass[l] += 1.0;
    }
    // the labelled distance term does not involve pi but belongs to the objective
    let labeled_dist = distance_matrix(labeled, centroids)?;
    let labeled_cost: f64 = labels
        .iter()
        .enumerate()
        .map(|(j, &l)| lambda * labeled_dist.get(j, l))
        .sum();
    let objective = |weights: &[f64], unlabeled_ll: f64| {
        let mut o = unlabeled_ll - labeled_cost;
        for (m, w) in labeled_mass.iter().zip(weights) {
            if *m > 0.0 {
                o += m * w.ln();
            }
        }
        o
    };

    let dist = distance_matrix(matched, centroids)?;
    let mut weights: Vec<f64> = if n_next > 0 {
        labeled_mass.iter().map(|m| m / n_next as f64).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let (mut posteriors, ll) = posteriors_from_distances(&dist, &weights, lambda)?;
    trace.push(objective(&weights, ll));
    for _ in 0..options.max_iter.max(1) {
        let mass = posteriors.column_sums();
        weights = (0..k)
            .map(|i| (mass[i] + labeled_mass[i]) / (n_t + n_next) as f64)
            .collect();
        let (post, ll) = posteriors_from_distances(&dist, &weights, lambda)?;
        posteriors = post;
        let o = objective(&weights, ll);
        let prev = *trace.last().expect("initial objective");
        trace.push(o);
        if (o - prev).abs() <= options.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(SemiSupervisedFit {
        projected: posteriors.hard_labels(),
        posteriors,
        weights,
        iterations: trace.len() - 1,
        objective_trace: trace,
        converged,
    })
}

/// Cross-tabulation of epoch-`t` clusters against their projected clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigrationMatrix {
    /// `counts[u][v]`: documents of cluster `u` projected into `v`.
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized counts; `None` for source clusters with no documents.
    pub fractions: Vec<Option<Vec<f64>>>,
}

impl MigrationMatrix {
    pub fn k_from(&self) -> usize {
        self.counts.len()
    }

    pub fn k_to(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.k_from()).filter(|&u| self.fractions[u].is_none()).collect()
    }

    /// CSV with one row per source cluster: `from,<to_0>,...,total`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from");
        for v in 0..self.k_to() {
            s.push_str(&format!(",to_{v}"));
        }
        s.push_str(",total\n");
        for (u, row) in self.counts.iter().enumerate() {
            s.push_str(&u.to_string());
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push_str(&format!(",{}\n", row.iter().sum::<usize>()));
        }
        s
    }
}

/// `n_uv` and `f_uv = n_uv / sum_v n_uv`.
pub fn migration_matrix(labels_t: &[usize], k_t: usize, projected: &[usize], k_next: usize) -> Result<MigrationMatrix> {
    if labels_t.len() != projected.len() {
        return Err(Error::DimensionMismatch {
            expected: labels_t.len(),
            actual: projected.len(),
        });
    }
    let mut counts = vec![vec![0usize; k_next]; k_t];
    for (&u, &v) in labels_t.iter().zip(projected) {
        if u >= k_t || v >= k_next {
            return Err(Error::InvalidArgument(format!("label pair ({u}, {v}) outside {k_t} x {k_next}")));
        }
        counts[u][v] += 1;
    }
    let fractions = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect();
    Ok(MigrationMatrix { counts, fractions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(ts: &[&str]) -> Vocabulary {
        Vocabulary::new(ts.iter().map(|s| s.to_string()))
    }

    fn raw(rows: &[Vec<f64>], ts: &[&str]) -> DocTermMatrix {
        DocTermMatrix::from_dense(rows, vocab(ts), Weighting::RawCount).unwrap()
    }

    #[test]
    fn matching_drops_and_zero_fills() {
        let src = raw(&[vec![2.0, 1.0]], &["a", "b"]);
        let m = match_vocabulary(&src, &vocab(&["b", "c"]), &MatchWeighting::RawCounts).unwrap();
        assert_eq!(m.matrix.to_dense(), vec![vec![1.0, 0.0]]);
        assert_eq!(m.provenance, vec![Provenance::Source(1), Provenance::AddedZero]);
        assert_eq!(m.shared_terms, 1);
    }

    #[test]
    fn identical_vocabulary_is_identity() {
        let src = raw(&[vec![2.0, 1.0], vec![0.0, 3.0]], &["a", "b"]);
        let m = match_vocabulary(&src, src.vocabulary(), &MatchWeighting::RawCounts).unwrap();
        assert_eq!(m.matrix, src);
        assert_eq!(m.provenance, vec![Provenance::Source(0), Provenance::Source(1)]);
    }

    #[test]
    fn documents_can_be_emptied() {
        let src = raw(&[vec![2.0, 0.0], vec![1.0, 1.0]], &["a", "b"]);
        let m = match_vocabulary(&src, &vocab(&["b", "z"]), &MatchWeighting::RawCounts).unwrap();
        assert_eq!(m.emptied_docs, vec![0]);
        assert!(matches!(
            match_vocabulary(&src, &vocab(&["x"]), &MatchWeighting::RawCounts),
            Err(Error::DisjointVocabularies)
        ));
    }

    #[test]
    fn source_idf_uses_source_frequencies() {
        // a in 1 of 2 docs, b in both (weight 0)
        let src = raw(&[vec![2.0, 1.0], vec![0.0, 3.0]], &["a", "b"]);
        let m = match_vocabulary(&src, &vocab(&["a", "b", "c"]), &MatchWeighting::SourceIdf).unwrap();
        let d = m.matrix.to_dense();
        assert!((d[0][0] - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(d[0][1], 0.0);
        assert_eq!(m.emptied_docs, vec![1]);
    }

    fn unit(v: Vec<f64>) -> Centroid {
        Centroid::from_direction(v).unwrap()
    }

    #[test]
    fn no_unlabelled_documents_gives_label_proportions() {
        let v = vocab(&["a", "b"]);
        let labeled = DocTermMatrix::from_dense(
            &[vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0], vec![0.2, 1.0]],
            v.clone(),
            Weighting::IdfWeighted,
        )
        .unwrap();
        let empty = DocTermMatrix::from_rows(vec![], v, Weighting::IdfWeighted).unwrap();
        let c = [unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let fit = fit_semisupervised(&empty, &labeled, &[0, 0, 0, 1], &c, 5.0, EmOptions::default()).unwrap();
        assert_eq!(fit.weights, vec![0.75, 0.25]);
        assert!(fit.converged);
    }

    #[test]
    fn document_on_a_centroid_projects_there() {
        let v = vocab(&["a", "b"]);
        let labeled =
            DocTermMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], v.clone(), Weighting::IdfWeighted).unwrap();
        let matched = DocTermMatrix::from_dense(&[vec![3.0, 0.0]], v, Weighting::IdfWeighted).unwrap();
        let c = [unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let mut last = 0.0;
        for lambda in [1.0, 5.0, 20.0, 100.0] {
            let fit = fit_semisupervised(&matched, &labeled, &[0, 1], &c, lambda, EmOptions::default()).unwrap();
            let p = fit.posteriors.get(0, 0);
            assert!(p >= fit.posteriors.get(0, 1));
            assert!(p >= last);
            last = p;
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
            }
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn migration_examples() {
        let labels = vec![0; 10];
        let projected = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let m = migration_matrix(&labels, 2, &projected, 2).unwrap();
        assert_eq!(m.fractions[0], Some(vec![0.7, 0.3]));
        assert_eq!(m.empty_rows(), vec![1]);
        let p = migration_matrix(&[0, 1, 2], 3, &[2, 0, 1], 3).unwrap();
        for row in p.fractions.iter().flatten() {
            assert_eq!(row.iter().filter(|&&f| f == 1.0).count(), 1);
        }
        assert!(p.to_csv().starts_with("from,to_0,to_1,to_2,total\n0,0,0,1,1\n"));
    }
}
