//! EM for the mixture: E-step posteriors, M-step weights, spherical-mean
//! centroids and (optionally) a re-solved precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    calibration::solve_lambda, nonzero_distances, posteriors_from_distances, CalibrationTarget, ClusteringResult,
    FitMetadata, LambdaMode, MixtureModel, Posteriors,
};
use crate::geometry::{distance_matrix, spherical_kmeans, spherical_mean, Centroid};
use crate::textprep::{DocTermMatrix, Weighting};
use crate::{Error, Result};

/// Components whose posterior mass falls below this are reported as collapsed.
pub const COLLAPSE_MASS: f64 = 1e-12;

/// Starting point of EM.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Best of `n_runs` seeded spherical k-means runs.
    KMeans { n_runs: usize, seed: u64 },
    /// Hard labels; `None` rows start uniform.
    Labels(Vec<Option<usize>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when the relative change of the partial log-likelihood drops below this.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// New parameters from one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub centroids: Vec<Centroid>,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

/// M-step: `pi_i = sum_j z_ji / n`, `xi_i` the `z_.i`-weighted spherical mean, and
/// lambda either held or re-solved against the new centroids.
pub fn m_step(
    matrix: &DocTermMatrix,
    posteriors: &Posteriors,
    target: CalibrationTarget,
    mode: LambdaMode,
) -> Result<MStep> {
    m_step_at(matrix, posteriors, target, mode, 0)
}

pub(crate) fn m_step_at(
    matrix: &DocTermMatrix,
    posteriors: &Posteriors,
    target: CalibrationTarget,
    mode: LambdaMode,
    iteration: usize,
) -> Result<MStep> {
    let n = matrix.n_docs();
    if posteriors.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: posteriors.n(),
        });
    }
    let mass = posteriors.column_sums();
    if let Some(component) = mass.iter().position(|&m| m < COLLAPSE_MASS) {
        return Err(Error::ComponentCollapse { component, iteration });
    }
    let weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    let centroids = (0..posteriors.k())
        .into_par_iter()
        .map(|i| spherical_mean(matrix, &posteriors.column(i)))
        .collect::<Result<Vec<_>>>()?;
    let lambda = match mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::ResolveEachIter => solve_lambda(&nonzero_distances(matrix, &centroids)?, &weights, target)?,
    };
    Ok(MStep {
        centroids,
        weights,
        lambda,
    })
}

/// Fit a k-component mixture by EM.
pub fn fit_em(
    matrix: &DocTermMatrix,
    k: usize,
    target: CalibrationTarget,
    init: &Init,
    mode: LambdaMode,
    options: EmOptions,
) -> Result<(MixtureModel, ClusteringResult)> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("EM needs k >= 2, got {k}")));
    }
    if let LambdaMode::Fixed(l) = mode {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("fixed lambda {l} must be positive")));
        }
    }
    if matrix.weighting() != Weighting::IdfWeighted {
        log::warn!("fitting a raw-count matrix; IDF weighting is expected");
    }
    let (mut posteriors, seed) = match init {
        Init::KMeans { n_runs, seed } => {
            let fit = spherical_kmeans(matrix, k, *n_runs, *seed)?;
            (Posteriors::one_hot(&fit.labels, k)?, Some(*seed))
        }
        Init::Labels(labels) => {
            if labels.len() != matrix.n_docs() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.n_docs(),
                    actual: labels.len(),
                });
            }
            (Posteriors::one_hot(labels, k)?, None)
        }
    };

    let fingerprint = matrix.vocabulary().fingerprint();
    let mut trace: Vec<f64> = Vec::new();
    let mut best: Option<(MixtureModel, Posteriors, f64)> = None;
    let mut current: Option<(MixtureModel, f64)> = None;
    let mut converged = false;

    for iteration in 1..=options.max_iter.max(1) {
        let step = m_step_at(matrix, &posteriors, target, mode, iteration)?;
        let model = MixtureModel {
            centroids: step.centroids,
            weights: step.weights,
            lambda: step.lambda,
            vocabulary_fingerprint: fingerprint.clone(),
            metadata: FitMetadata {
                seed,
                alpha: target.alpha(),
                lambda_mode: mode,
                n_docs: matrix.n_docs(),
                n_terms: matrix.n_terms(),
                iterations: iteration,
            },
        };
        let dist = distance_matrix(matrix, &model.centroids)?;
        let (post, ll) = posteriors_from_distances(&dist, &model.weights, model.lambda)?;
        posteriors = post;
        let prev = trace.last().copied();
        trace.push(ll);
        if best.as_ref().is_none_or(|b| ll > b.2) {
            best = Some((model.clone(), posteriors.clone(), ll));
        }
        current = Some((model, ll));
        if let Some(prev) = prev {
            if (ll - prev).abs() <= options.tol * prev.abs() {
                converged = true;
                break;
            }
        }
    }

    let (model, posteriors, ll) = if converged {
        let (model, ll) = current.expect("at least one iteration");
        (model, posteriors, ll)
    } else {
        log::warn!("EM stopped after {} iterations without converging", trace.len());
        best.expect("at least one iteration")
    };
    let result = ClusteringResult {
        hard_labels: posteriors.hard_labels(),
        posteriors,
        partial_loglik: ll,
        n_iterations: trace.len(),
        converged,
        loglik_trace: trace,
    };
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::Vocabulary;

    fn m(rows: &[Vec<f64>]) -> DocTermMatrix {
        let p = rows[0].len();
        DocTermMatrix::from_dense(
            rows,
            Vocabulary::new((0..p).map(|i| format!("t{i:03}"))),
            Weighting::IdfWeighted,
        )
        .unwrap()
    }

    fn toy() -> DocTermMatrix {
        m(&[
            vec![3.0, 1.0, 0.0, 0.0],
            vec![2.0, 1.0, 0.2, 0.0],
            vec![4.0, 0.5, 0.0, 0.1],
            vec![0.0, 0.2, 3.0, 1.0],
            vec![0.1, 0.0, 2.0, 2.0],
            vec![0.0, 0.0, 1.0, 3.0],
        ])
    }

    #[test]
    fn one_hot_posteriors_give_cluster_means() {
        let x = toy();
        let labels = [0, 0, 0, 1, 1, 1].map(Some);
        let post = Posteriors::one_hot(&labels, 2).unwrap();
        let s = m_step(&x, &post, CalibrationTarget::default(), LambdaMode::Fixed(5.0)).unwrap();
        assert_eq!(s.weights, vec![0.5, 0.5]);
        assert_eq!(s.lambda, 5.0);
        let direct = spherical_mean(&x, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.centroids[0], direct);
    }

    #[test]
    fn uniform_posteriors_give_global_mean() {
        let x = toy();
        let post = Posteriors::one_hot(&[None; 6], 2).unwrap();
        let s = m_step(&x, &post, CalibrationTarget::default(), LambdaMode::Fixed(5.0)).unwrap();
        assert_eq!(s.weights, vec![0.5, 0.5]);
        let global = spherical_mean(&x, &[1.0; 6]).unwrap();
        for c in &s.centroids {
            for (a, b) in c.values().iter().zip(global.values()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn resolve_mode_matches_solve_lambda() {
        let x = toy();
        let post = Posteriors::one_hot(&[0, 0, 0, 1, 1, 1].map(Some), 2).unwrap();
        let t = CalibrationTarget::default();
        let s = m_step(&x, &post, t, LambdaMode::ResolveEachIter).unwrap();
        let d = distance_matrix(&x, &s.centroids).unwrap();
        assert_eq!(s.lambda, solve_lambda(&d, &s.weights, t).unwrap());
    }

    #[test]
    fn empty_component_collapses() {
        let x = toy();
        let post = Posteriors::one_hot(&[Some(0); 6], 2).unwrap();
        let err = m_step(&x, &post, CalibrationTarget::default(), LambdaMode::Fixed(1.0)).unwrap_err();
        assert!(matches!(err, Error::ComponentCollapse { component: 1, .. }));
    }

    #[test]
    fn duplicated_document_cannot_support_two_components() {
        let x = m(&vec![vec![1.0, 2.0, 0.0]; 5]);
        let init = Init::KMeans { n_runs: 2, seed: 3 };
        let err = fit_em(&x, 2, CalibrationTarget::default(), &init, LambdaMode::Fixed(10.0), EmOptions::default());
        assert!(err.unwrap_err().is_numerical());
    }

    #[test]
    fn fixed_lambda_loglik_nondecreasing() {
        let x = toy();
        let init = Init::Labels(vec![Some(0), Some(1), Some(0), Some(1), Some(0), Some(1)]);
        let (model, res) =
            fit_em(&x, 2, CalibrationTarget::default(), &init, LambdaMode::Fixed(8.0), EmOptions::default()).unwrap();
        for w in res.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
        assert!(res.converged);
        assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..6 {
            assert!((res.posteriors.row(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(res.hard_labels[..3], [res.hard_labels[0]; 3]);
        assert_ne!(res.hard_labels[0], res.hard_labels[3]);
    }
}
