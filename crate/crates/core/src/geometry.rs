//! Cosine distance, weighted spherical centroids and spherical k-means.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::textprep::{DocTermMatrix, Row};
use crate::{Error, Result};

static ZERO_VECTOR_DISTANCES: AtomicU64 = AtomicU64::new(0);

/// How many distances involving an all-zero vector have been evaluated (and set to 1)
/// in this process.
pub fn zero_vector_distance_count() -> u64 {
    ZERO_VECTOR_DISTANCES.load(Ordering::Relaxed)
}

fn zero_vector_distance() -> f64 {
    ZERO_VECTOR_DISTANCES.fetch_add(1, Ordering::Relaxed);
    1.0
}

fn from_cosine(cos: f64) -> f64 {
    (1.0 - cos).clamp(0.0, 1.0)
}

/// Unit-norm nonnegative direction in term space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Centroid(Vec<f64>);

impl Centroid {
    /// Normalize a nonnegative vector to unit length.
    pub fn from_direction(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("centroid entries must be finite and nonnegative".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateCluster);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Centroid(values))
    }

    pub fn from_row(row: Row<'_>, p: usize) -> Result<Self> {
        Self::from_direction(row.to_dense(p))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Check the unit-norm invariant (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let n = self.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-10 || self.0.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(format!("centroid norm {n} is not 1")));
        }
        Ok(())
    }
}

/// `1 - <x, y> / (|x| |y|)` for dense vectors; 1 when either is all-zero.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Ok(zero_vector_distance());
    }
    Ok(from_cosine(xy / (xx.sqrt() * yy.sqrt())))
}

/// Distance between a sparse row and a unit-norm centroid.
pub fn row_centroid_distance(row: Row<'_>, centroid: &Centroid) -> f64 {
    if row.is_zero() {
        return zero_vector_distance();
    }
    let c = centroid.values();
    let dot: f64 = row.iter().map(|(i, v)| v * c[i]).sum();
    from_cosine(dot / row.norm)
}

/// Distance between two sparse rows.
pub fn row_row_distance(a: Row<'_>, b: Row<'_>) -> f64 {
    if a.is_zero() || b.is_zero() {
        return zero_vector_distance();
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a.values[i] * b.values[j];
                i += 1;
                j += 1;
            }
        }
    }
    from_cosine(dot / (a.norm * b.norm))
}

/// Row-major n x k matrix of document-to-centroid distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                actual: data.len(),
            });
        }
        Ok(DistanceMatrix { n, k, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.k + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.k..(j + 1) * self.k]
    }

    /// Index of the smallest distance in row `j`, lowest index on ties.
    pub fn nearest(&self, j: usize) -> usize {
        argmin(self.row(j))
    }
}

pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Distances from every document to every centroid, parallel over documents.
pub fn distance_matrix(matrix: &DocTermMatrix, centroids: &[Centroid]) -> Result<DistanceMatrix> {
    let p = matrix.n_terms();
    if let Some(c) = centroids.iter().find(|c| c.dim() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: c.dim(),
        });
    }
    let data: Vec<f64> = (0..matrix.n_docs())
        .into_par_iter()
        .flat_map_iter(|j| {
            let row = matrix.row(j);
            centroids.iter().map(move |c| row_centroid_distance(row, c))
        })
        .collect();
    DistanceMatrix::new(matrix.n_docs(), centroids.len(), data)
}

/// Weighted spherical mean: the unit direction minimizing `sum_j w_j d(y_j, xi)`.
///
/// `d(y, xi) = 1 - <y/|y|, xi>` for unit `xi`, so the objective is linear in `xi`
/// and is minimized by the normalized weighted sum of the normalized rows.
pub fn spherical_mean(matrix: &DocTermMatrix, weights: &[f64]) -> Result<Centroid> {
    if weights.len() != matrix.n_docs() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_docs(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let mut acc = vec![0.0; matrix.n_terms()];
    for (j, &w) in weights.iter().enumerate() {
        let row = matrix.row(j);
        if w == 0.0 || row.is_zero() {
            continue;
        }
        let s = w / row.norm;
        for (i, v) in row.iter() {
            acc[i] += s * v;
        }
    }
    Centroid::from_direction(acc)
}

/// `sum_j w_j d(y_j, xi)`.
pub fn weighted_distance_sum(matrix: &DocTermMatrix, weights: &[f64], centroid: &Centroid) -> f64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(j, &w)| w * row_centroid_distance(matrix.row(j), centroid))
        .sum()
}

/// Spherical k-means outcome. Zero rows carry no label.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<Option<usize>>,
    pub centroids: Vec<Centroid>,
    /// Sum of member distances to their centroid.
    pub objective: f64,
    /// Objective after every assignment step of the winning run.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning run.
    pub run: usize,
}

impl KMeansFit {
    /// Labels with zero rows mapped to cluster 0.
    pub fn dense_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.unwrap_or(0)).collect()
    }
}

pub const KMEANS_MAX_ITER: usize = 100;

/// Spherical k-means under cosine distance: `n_runs` seeded k-means++ starts,
/// best objective wins (lowest run index on ties).
pub fn spherical_kmeans(matrix: &DocTermMatrix, k: usize, n_runs: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let nonzero: Vec<usize> = (0..matrix.n_docs()).filter(|&j| !matrix.row(j).is_zero()).collect();
    if nonzero.len() < k {
        return Err(Error::InvalidArgument(format!(
            "spherical k-means needs at least k={k} nonzero rows, found {}",
            nonzero.len()
        )));
    }
    let runs: Vec<KMeansFit> = (0..n_runs.max(1))
        .into_par_iter()
        .map(|r| kmeans_run(matrix, &nonzero, k, seed, r))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (r, fit) in runs.iter().enumerate() {
        if fit.objective < runs[best].objective {
            best = r;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one run"))
}

fn kmeans_pp(matrix: &DocTermMatrix, nonzero: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Centroid>> {
    let p = matrix.n_terms();
    let mut chosen = vec![nonzero[rng.random_range(0..nonzero.len())]];
    let mut centroids = vec![Centroid::from_row(matrix.row(chosen[0]), p)?];
    let mut nearest: Vec<f64> = nonzero
        .iter()
        .map(|&j| row_centroid_distance(matrix.row(j), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            // rounding can exhaust `target`; fall back to the last positive weight
            let mut pick = nearest.iter().rposition(|&d| d > 0.0).expect("total > 0");
            for (t, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = t;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining rows coincide with a chosen centre
            let free: Vec<usize> = (0..nonzero.len()).filter(|t| !chosen.contains(&nonzero[*t])).collect();
            if free.is_empty() {
                rng.random_range(0..nonzero.len())
            } else {
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(nonzero[pick]);
        let c = Centroid::from_row(matrix.row(nonzero[pick]), p)?;
        for (t, &j) in nonzero.iter().enumerate() {
            let d = row_centroid_distance(matrix.row(j), &c);
            if d < nearest[t] {
                nearest[t] = d;
            }
        }
        centroids.push(c);
    }
    Ok(centroids)
}

fn kmeans_run(matrix: &DocTermMatrix, nonzero: &[usize], k: usize, seed: u64, run: usize) -> Result<KMeansFit> {
    let p = matrix.n_terms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut centroids = kmeans_pp(matrix, nonzero, k, &mut rng)?;
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut dists: Vec<f64> = Vec::new();

    for _ in 0..KMEANS_MAX_ITER {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = nonzero
            .par_iter()
            .map(|&j| {
                let row = matrix.row(j);
                let ds: Vec<f64> = centroids.iter().map(|c| row_centroid_distance(row, c)).collect();
                let i = argmin(&ds);
                (i, ds[i])
            })
            .collect();
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        dists = assigned.iter().map(|a| a.1).collect();
        trace.push(dists.iter().sum());
        if new_labels == labels {
            converged = true;
            break;
        }
        labels = new_labels;

        let mut acc = vec![vec![0.0; p]; k];
        let mut sizes = vec![0usize; k];
        for (t, &j) in nonzero.iter().enumerate() {
            let row = matrix.row(j);
            let a = &mut acc[labels[t]];
            sizes[labels[t]] += 1;
            for (h, v) in row.iter() {
                a[h] += v / row.norm;
            }
        }
        let mut used = Vec::new();
        for i in 0..k {
            if sizes[i] > 0 {
                centroids[i] = Centroid::from_direction(std::mem::take(&mut acc[i]))?;
            } else {
                // reseed from the member farthest from its own centroid
                let far = (0..nonzero.len())
                    .filter(|t| !used.contains(t))
                    .fold(None::<usize>, |best, t| match best {
                        Some(b) if dists[b] >= dists[t] => Some(b),
                        _ => Some(t),
                    });
                if let Some(t) = far {
                    used.push(t);
                    centroids[i] = Centroid::from_row(matrix.row(nonzero[t]), p)?;
                }
            }
        }
    }
    let mut full = vec![None; matrix.n_docs()];
    for (t, &j) in nonzero.iter().enumerate() {
        full[j] = Some(labels[t]);
    }
    Ok(KMeansFit {
        labels: full,
        centroids,
        objective: dists.iter().sum(),
        objective_trace: trace,
        iterations,
        converged,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{Vocabulary, Weighting};

    fn m(rows: &[Vec<f64>]) -> DocTermMatrix {
        let p = rows[0].len();
        DocTermMatrix::from_dense(
            rows,
            Vocabulary::new((0..p).map(|i| format!("t{i:03}"))),
            Weighting::IdfWeighted,
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        let d = cosine_distance(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((d - 0.29289).abs() < 1e-5);
        assert!(cosine_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_vector_convention() {
        let before = zero_vector_distance_count();
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(zero_vector_distance_count() > before);
    }

    #[test]
    fn sparse_routes_agree_with_dense() {
        let mat = m(&[vec![1.0, 0.0, 2.0, 0.5], vec![0.0, 3.0, 1.0, 0.0]]);
        let dense = mat.to_dense();
        let d = row_row_distance(mat.row(0), mat.row(1));
        assert!((d - cosine_distance(&dense[0], &dense[1]).unwrap()).abs() < 1e-15);
        let c = Centroid::from_direction(dense[1].clone()).unwrap();
        assert!((row_centroid_distance(mat.row(0), &c) - d).abs() < 1e-15);
    }

    #[test]
    fn spherical_mean_examples() {
        let mat = m(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = spherical_mean(&mat, &[1.0, 1.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((c.values()[0] - s).abs() < 1e-15 && (c.values()[1] - s).abs() < 1e-15);
        for j in 0..2 {
            assert!((row_centroid_distance(mat.row(j), &c) - 0.29289).abs() < 1e-5);
        }
        let single = spherical_mean(&mat, &[0.0, 2.0]).unwrap();
        assert_eq!(single.values(), &[0.0, 1.0]);
        assert_eq!(weighted_distance_sum(&mat, &[0.0, 2.0], &single), 0.0);
    }

    #[test]
    fn spherical_mean_degenerate() {
        let mat = m(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert!(matches!(spherical_mean(&mat, &[1.0, 0.0]), Err(Error::DegenerateCluster)));
        assert!(spherical_mean(&mat, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn kmeans_k1_is_global_mean() {
        let mat = m(&[vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 1.0], vec![3.0, 1.0, 0.0]]);
        let fit = spherical_kmeans(&mat, 1, 3, 7).unwrap();
        assert!(fit.labels.iter().all(|l| *l == Some(0)));
        let global = spherical_mean(&mat, &[1.0; 3]).unwrap();
        for (a, b) in fit.centroids[0].values().iter().zip(global.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_k_equals_n_has_zero_objective() {
        let mat = m(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let fit = spherical_kmeans(&mat, 4, 2, 1).unwrap();
        assert!(fit.objective.abs() < 1e-12);
    }

    #[test]
    fn kmeans_zero_rows_unassigned() {
        let mat = m(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
        let fit = spherical_kmeans(&mat, 2, 1, 0).unwrap();
        assert_eq!(fit.labels[1], None);
        assert_ne!(fit.labels[0], fit.labels[2]);
        assert!(spherical_kmeans(&m(&[vec![1.0, 0.0], vec![0.0, 0.0]]), 2, 1, 0).is_err());
    }
}
