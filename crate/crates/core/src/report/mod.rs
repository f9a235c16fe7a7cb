//! Cluster summaries: cohesion, dominant terms, representative documents and
//! a planar layout of the centroids.

mod mds;

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mds::{centroid_distances, classical_mds, mds_layout};

use crate::geometry::{row_centroid_distance, row_row_distance, Centroid};
use crate::mixture::{ClusteringResult, MixtureModel};
use crate::textprep::DocTermMatrix;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Clusters larger than this get a sampled cohesion estimate.
pub const EXACT_COHESION_LIMIT: usize = 5000;
pub const COHESION_SAMPLE_PAIRS: usize = 200_000;
pub const BALLOON_HEADER: &str = "cluster,x,y,size,cohesion";

/// The JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cohesion {
    pub value: f64,
    pub mean_distance: f64,
    pub pairs: usize,
    pub estimator: Estimator,
}

/// `sqrt(1 - d^2)` for a mean within-cluster distance `d`.
pub fn cohesion_from_mean(mean_distance: f64) -> f64 {
    (1.0 - mean_distance * mean_distance).max(0.0).sqrt()
}

/// Cohesion over unordered member pairs; exact up to [`EXACT_COHESION_LIMIT`]
/// members, otherwise averaged over [`COHESION_SAMPLE_PAIRS`] seeded uniform pairs.
pub fn cohesion(matrix: &DocTermMatrix, members: &[usize], seed: u64) -> Cohesion {
    let m = members.len();
    if m < 2 {
        return Cohesion {
            value: 1.0,
            mean_distance: 0.0,
            pairs: 0,
            estimator: Estimator::Exact,
        };
    }
    if m <= EXACT_COHESION_LIMIT {
        let partial: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|a| {
                let ra = matrix.row(members[a]);
                members[a + 1..].iter().map(|&b| row_row_distance(ra, matrix.row(b))).sum()
            })
            .collect();
        let pairs = m * (m - 1) / 2;
        let mean = partial.iter().sum::<f64>() / pairs as f64;
        return Cohesion {
            value: cohesion_from_mean(mean),
            mean_distance: mean,
            pairs,
            estimator: Estimator::Exact,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, usize)> = (0..COHESION_SAMPLE_PAIRS)
        .map(|_| {
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect();
    let d: Vec<f64> = draws
        .par_iter()
        .map(|&(a, b)| row_row_distance(matrix.row(members[a]), matrix.row(members[b])))
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Cohesion {
        value: cohesion_from_mean(mean),
        mean_distance: mean,
        pairs: d.len(),
        estimator: Estimator::Sampled,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
}

/// The `m` terms with the largest summed weight over the members; ties go to
/// the lexicographically smaller term.
pub fn top_terms(matrix: &DocTermMatrix, members: &[usize], m: usize) -> Vec<TermWeight> {
    let mut sums = vec![0.0; matrix.n_terms()];
    let mut ordered = members.to_vec();
    ordered.sort_unstable();
    for j in ordered {
        for (h, v) in matrix.row(j).iter() {
            sums[h] += v;
        }
    }
    let vocab = matrix.vocabulary();
    let mut ids: Vec<usize> = (0..sums.len()).filter(|&h| sums[h] > 0.0).collect();
    ids.sort_by(|&a, &b| {
        sums[b]
            .partial_cmp(&sums[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    ids.truncate(m);
    ids.into_iter()
        .map(|h| TermWeight {
            term: vocab.term(h).to_string(),
            weight: sums[h],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub doc_id: usize,
    pub distance: f64,
}

/// The member closest to `centroid`; ties go to the lower row index.
pub fn representative_doc(matrix: &DocTermMatrix, members: &[usize], centroid: &Centroid) -> Option<Representative> {
    members
        .iter()
        .map(|&j| (j, row_centroid_distance(matrix.row(j), centroid)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)))
        .map(|(doc_id, distance)| Representative { doc_id, distance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub size: usize,
    pub weight: f64,
    pub cohesion: Option<Cohesion>,
    pub top_terms: Vec<TermWeight>,
    pub representative: Option<Representative>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub k: usize,
    pub n_docs: usize,
    pub n_terms: usize,
    pub lambda: f64,
    pub partial_loglik: f64,
    pub clusters: Vec<ClusterReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub top_terms: usize,
    /// Corpus ids of the matrix rows; row indices are reported when absent.
    pub doc_ids: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            top_terms: 5,
            doc_ids: None,
            seed: 0,
        }
    }
}

/// Per-cluster summaries from hard labels.
pub fn build_report(
    model: &MixtureModel,
    result: &ClusteringResult,
    matrix: &DocTermMatrix,
    options: &ReportOptions,
) -> Result<Report> {
    let k = model.k();
    if result.hard_labels.len() != matrix.n_docs() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_docs(),
            actual: result.hard_labels.len(),
        });
    }
    if let Some(ids) = &options.doc_ids {
        if ids.len() != matrix.n_docs() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n_docs(),
                actual: ids.len(),
            });
        }
    }
    let mut members = vec![Vec::new(); k];
    for (j, &l) in result.hard_labels.iter().enumerate() {
        members[l].push(j);
    }
    let layout = if k >= 2 { mds_layout(&model.centroids)? } else { vec![[0.0, 0.0]] };
    let clusters = (0..k)
        .into_par_iter()
        .map(|i| {
            let m = &members[i];
            let representative = representative_doc(matrix, m, &model.centroids[i]).map(|mut r| {
                if let Some(ids) = &options.doc_ids {
                    r.doc_id = ids[r.doc_id];
                }
                r
            });
            ClusterReport {
                cluster: i,
                size: m.len(),
                weight: model.weights[i],
                cohesion: (!m.is_empty()).then(|| cohesion(matrix, m, options.seed.wrapping_add(i as u64))),
                top_terms: top_terms(matrix, m, options.top_terms),
                representative,
                x: layout[i][0],
                y: layout[i][1],
            }
        })
        .collect();
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        k,
        n_docs: matrix.n_docs(),
        n_terms: matrix.n_terms(),
        lambda: model.lambda,
        partial_loglik: result.partial_loglik,
        clusters,
    })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Balloon table: one row per cluster with layout, size and cohesion.
    pub fn balloons_csv(&self) -> String {
        let mut s = format!("{BALLOON_HEADER}\n");
        for c in &self.clusters {
            let coh = c.cohesion.map(|x| x.value.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", c.cluster, c.x, c.y, c.size, coh));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub balloons: PathBuf,
}

/// Write `report.json` and `balloons.csv` into `dir`.
pub fn emit_reports(
    model: &MixtureModel,
    result: &ClusteringResult,
    matrix: &DocTermMatrix,
    options: &ReportOptions,
    dir: &Path,
) -> Result<ReportFiles> {
    let report = build_report(model, result, matrix, options)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let balloons = dir.join("balloons.csv");
    fs::write(&json, report.to_json()? + "\n").map_err(|e| Error::io(&json, e))?;
    fs::write(&balloons, report.balloons_csv()).map_err(|e| Error::io(&balloons, e))?;
    Ok(ReportFiles { json, balloons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{Vocabulary, Weighting};

    fn m(rows: &[Vec<f64>], terms: &[&str]) -> DocTermMatrix {
        DocTermMatrix::from_dense(rows, Vocabulary::new(terms.iter().map(|s| s.to_string())), Weighting::IdfWeighted)
            .unwrap()
    }

    #[test]
    fn cohesion_examples() {
        assert!((cohesion_from_mean(0.6) - 0.8).abs() < 1e-12);
        let same = m(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.5, 1.0]], &["a", "b"]);
        let c = cohesion(&same, &[0, 1, 2], 0);
        assert!((c.value - 1.0).abs() < 1e-12);
        assert_eq!(c.pairs, 3);
        assert_eq!(cohesion(&same, &[1], 0).value, 1.0);
    }

    #[test]
    fn outlier_lowers_cohesion() {
        let x = m(&[vec![1.0, 0.1, 0.0], vec![1.0, 0.2, 0.0], vec![0.9, 0.1, 0.0], vec![0.0, 0.0, 1.0]], &["a", "b", "c"]);
        let tight = cohesion(&x, &[0, 1, 2], 0).value;
        let loose = cohesion(&x, &[0, 1, 2, 3], 0).value;
        assert!(loose <= tight);
    }

    #[test]
    fn top_terms_examples() {
        let x = m(&[vec![2.3, 4.6]], &["mean", "test"]);
        let t = top_terms(&x, &[0], 2);
        assert_eq!(t.iter().map(|w| w.term.as_str()).collect::<Vec<_>>(), ["test", "mean"]);
        assert_eq!(top_terms(&x, &[0], 10).len(), 2);
    }

    #[test]
    fn top_terms_match_dense_sum() {
        let x = m(&[vec![1.0, 0.0, 2.0, 0.5], vec![0.0, 3.0, 1.0, 0.5], vec![9.0, 9.0, 9.0, 9.0]], &["a", "b", "c", "d"]);
        let dense = x.to_dense();
        let mut sums: Vec<(f64, String)> = (0..4).map(|h| (dense[0][h] + dense[1][h], x.vocabulary().term(h).to_string())).collect();
        sums.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let got: Vec<String> = top_terms(&x, &[1, 0], 4).into_iter().map(|t| t.term).collect();
        assert_eq!(got, sums.into_iter().map(|s| s.1).collect::<Vec<_>>());
        assert_eq!(top_terms(&x, &[0, 1], 4), top_terms(&x, &[1, 0], 4));
    }

    #[test]
    fn representative_examples() {
        let x = m(&[vec![0.0, 1.0], vec![2.0, 0.1], vec![3.0, 0.0]], &["a", "b"]);
        let c = Centroid::from_direction(vec![1.0, 0.0]).unwrap();
        let r = representative_doc(&x, &[0, 1, 2], &c).unwrap();
        assert_eq!(r.doc_id, 2);
        assert!(r.distance.abs() < 1e-15);
        let r = representative_doc(&x, &[0, 1], &c).unwrap();
        assert_eq!(r.doc_id, 1);
        assert!(representative_doc(&x, &[], &c).is_none());
    }

    #[test]
    fn sampled_estimate_is_close() {
        let rows: Vec<Vec<f64>> = (0..5200).map(|j| vec![1.0 + (j % 7) as f64, (j % 3) as f64, (j % 5 == 0) as u8 as f64]).collect();
        let x = m(&rows, &["a", "b", "c"]);
        let members: Vec<usize> = (0..5200).collect();
        let s = cohesion(&x, &members, 1);
        assert_eq!(s.estimator, Estimator::Sampled);
        let exact = cohesion(&x, &members[..3000], 1);
        assert!((s.mean_distance - exact.mean_distance).abs() < 0.01);
    }
}
