//! Mixture of cosine-distance densities: `f(y) = sum_i pi_i psi(lambda) exp(-lambda d(y, xi_i))`.
//!
//! The normalizing constant `psi(lambda)` has no closed form and is never
//! evaluated. Every likelihood reported here is the computable part
//! `sum_j log sum_i pi_i exp(-lambda d_ji)`, so values are only comparable at
//! equal `lambda` and equal `n`.

mod calibration;
mod em;
mod persist;
mod selection;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use calibration::{aggregate_alpha, calibration_lhs, solve_lambda, CalibrationTarget, LAMBDA_RTOL};
pub use em::{fit_em, m_step, EmOptions, Init, MStep};
pub use persist::{classify, load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use selection::{
    average_lambda_over_k, information_criteria, select_k, Criteria, KSelection, LambdaAverage, LambdaAtK,
};

use crate::geometry::{argmin, distance_matrix, row_centroid_distance, Centroid, DistanceMatrix};
use crate::textprep::{DocTermMatrix, Row};
use crate::{Error, Result};

/// How the precision is handled during EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "lambda")]
pub enum LambdaMode {
    /// Re-solve the calibration equation at every M-step.
    ResolveEachIter,
    /// Hold lambda at the given value.
    Fixed(f64),
}

/// Provenance of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: Option<u64>,
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub n_docs: usize,
    pub n_terms: usize,
    pub iterations: usize,
}

/// Centroids, mixing weights and precision, bound to a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub centroids: Vec<Centroid>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub vocabulary_fingerprint: String,
    pub metadata: FitMetadata,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.centroids.first().map_or(0, Centroid::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidArgument("model has no components".into()));
        }
        if self.weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.weights.len(),
            });
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 || self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be positive and sum to 1 (sum {total})")));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be positive", self.lambda)));
        }
        let p = self.n_terms();
        for c in &self.centroids {
            if c.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: c.dim(),
                });
            }
            c.validate()?;
        }
        Ok(())
    }

    fn check_matrix(&self, matrix: &DocTermMatrix) -> Result<()> {
        let fp = matrix.vocabulary().fingerprint();
        if fp != self.vocabulary_fingerprint {
            return Err(Error::VocabularyMismatch {
                model: self.vocabulary_fingerprint.clone(),
                matrix: fp,
            });
        }
        Ok(())
    }
}

/// Row-major n x k posterior matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Posteriors {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                actual: data.len(),
            });
        }
        Ok(Posteriors { n, k, data })
    }

    /// One-hot rows from hard labels; `None` gives a uniform row.
    pub fn one_hot(labels: &[Option<usize>], k: usize) -> Result<Self> {
        let mut data = vec![0.0; labels.len() * k];
        for (j, l) in labels.iter().enumerate() {
            match *l {
                Some(i) if i < k => data[j * k + i] = 1.0,
                Some(i) => return Err(Error::InvalidArgument(format!("label {i} out of range for k={k}"))),
                None => data[j * k..(j + 1) * k].fill(1.0 / k as f64),
            }
        }
        Posteriors::new(labels.len(), k, data)
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

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, i)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for j in 0..self.n {
            for (i, v) in self.row(j).iter().enumerate() {
                s[i] += v;
            }
        }
        s
    }

    /// Argmax per row, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n)
            .map(|j| {
                let r = self.row(j);
                let mut best = 0;
                for i in 1..r.len() {
                    if r[i] > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Output of an E-step or a full fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub posteriors: Posteriors,
    pub hard_labels: Vec<usize>,
    pub partial_loglik: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
}

/// Posteriors and partial log-likelihood from a distance matrix.
pub fn posteriors_from_distances(dist: &DistanceMatrix, weights: &[f64], lambda: f64) -> Result<(Posteriors, f64)> {
    let k = dist.k();
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: weights.len(),
        });
    }
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let rows: Vec<(Vec<f64>, f64)> = (0..dist.n())
        .into_par_iter()
        .map(|j| {
            let a: Vec<f64> = dist
                .row(j)
                .iter()
                .zip(&log_w)
                .map(|(d, lw)| lw - lambda * d)
                .collect();
            let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = a.iter().map(|x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            (e.into_iter().map(|x| x / s).collect(), m + s.ln())
        })
        .collect();
    let mut data = Vec::with_capacity(dist.n() * k);
    let mut ll = 0.0;
    for (r, l) in rows {
        data.extend(r);
        ll += l;
    }
    Ok((Posteriors::new(dist.n(), k, data)?, ll))
}

/// Distances from the nonzero rows only; all-zero documents carry no
/// directional information and are left out of lambda calibration.
pub(crate) fn nonzero_distances(matrix: &DocTermMatrix, centroids: &[Centroid]) -> Result<DistanceMatrix> {
    let dist = distance_matrix(matrix, centroids)?;
    let k = centroids.len();
    let mut data = Vec::with_capacity(dist.n() * k);
    let mut n = 0;
    for j in 0..matrix.n_docs() {
        if !matrix.row(j).is_zero() {
            data.extend_from_slice(dist.row(j));
            n += 1;
        }
    }
    DistanceMatrix::new(n, k, data)
}

/// E-step: posterior component probabilities for every document, plus the
/// partial log-likelihood.
pub fn e_step(model: &MixtureModel, matrix: &DocTermMatrix) -> Result<(Posteriors, f64)> {
    model.check_matrix(matrix)?;
    let dist = distance_matrix(matrix, &model.centroids)?;
    posteriors_from_distances(&dist, &model.weights, model.lambda)
}

/// Inconsistent-clustering probability of one document given its distances to
/// the centroids: one minus the posterior of the nearest component.
pub fn per_doc_alpha_from_distances(distances: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let near = argmin(distances);
    let d0 = distances[near];
    let mut others = 0.0;
    for (i, (&d, &w)) in distances.iter().zip(weights).enumerate() {
        if i != near {
            others += w * (-lambda * (d - d0)).exp();
        }
    }
    others / (others + weights[near])
}

pub fn per_doc_alpha(model: &MixtureModel, row: Row<'_>) -> f64 {
    let d: Vec<f64> = model.centroids.iter().map(|c| row_centroid_distance(row, c)).collect();
    per_doc_alpha_from_distances(&d, &model.weights, model.lambda)
}
