//! A shared precision across k and information criteria for choosing k.

use rayon::prelude::*;
use serde::Serialize;

use super::{calibration::solve_lambda, nonzero_distances, CalibrationTarget, ClusteringResult, LambdaMode, MixtureModel};
use crate::geometry::{spherical_kmeans, KMeansFit};
use crate::textprep::DocTermMatrix;
use crate::{Error, Result};

/// Calibrated lambda for one k, or why it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaAtK {
    pub k: usize,
    pub lambda: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LambdaAverage {
    pub lambda_bar: f64,
    pub per_k: Vec<LambdaAtK>,
    /// The k-means fits behind each lambda, reusable as EM starting points.
    pub kmeans: Vec<(usize, KMeansFit)>,
}

fn lambda_for_fit(matrix: &DocTermMatrix, fit: &KMeansFit, k: usize, target: CalibrationTarget) -> Result<f64> {
    let mut counts = vec![0usize; k];
    for l in fit.labels.iter().flatten() {
        counts[*l] += 1;
    }
    let total: usize = counts.iter().sum();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::ComponentCollapse {
            component: empty,
            iteration: fit.iterations,
        });
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    solve_lambda(&nonzero_distances(matrix, &fit.centroids)?, &weights, target)
}

/// Mean of the per-k calibrated lambdas, each taken from a spherical k-means
/// fit with hard-assignment proportions as weights. k values whose calibration
/// fails are skipped and reported.
pub fn average_lambda_over_k(
    matrix: &DocTermMatrix,
    ks: &[usize],
    target: CalibrationTarget,
    n_runs: usize,
    seed: u64,
) -> Result<LambdaAverage> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty k range".into()));
    }
    let outcomes: Vec<(LambdaAtK, Option<KMeansFit>)> = ks
        .par_iter()
        .map(|&k| {
            let fit = spherical_kmeans(matrix, k, n_runs, seed);
            let lambda = fit.as_ref().map_err(|e| e.to_string()).and_then(|f| {
                lambda_for_fit(matrix, f, k, target).map_err(|e| e.to_string())
            });
            let at = match lambda {
                Ok(l) => LambdaAtK {
                    k,
                    lambda: Some(l),
                    skipped: None,
                },
                Err(reason) => LambdaAtK {
                    k,
                    lambda: None,
                    skipped: Some(reason),
                },
            };
            (at, fit.ok())
        })
        .collect();
    let solved: Vec<f64> = outcomes.iter().filter_map(|(a, _)| a.lambda).collect();
    for (a, _) in &outcomes {
        if let Some(reason) = &a.skipped {
            log::warn!("lambda calibration skipped for k={}: {reason}", a.k);
        }
    }
    if solved.is_empty() {
        return Err(Error::CalibrationFailed);
    }
    let lambda_bar = solved.iter().sum::<f64>() / solved.len() as f64;
    let mut per_k = Vec::with_capacity(outcomes.len());
    let mut kmeans = Vec::new();
    for (a, fit) in outcomes {
        if let Some(f) = fit {
            kmeans.push((a.k, f));
        }
        per_k.push(a);
    }
    Ok(LambdaAverage {
        lambda_bar,
        per_k,
        kmeans,
    })
}

/// Akaike and Bayesian criteria of one fit (smaller is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criteria {
    pub k: usize,
    /// Free parameters: `(k - 1) + k (p - 1)`.
    pub nu: usize,
    pub partial_loglik: f64,
    pub lambda: f64,
    pub aic: f64,
    pub bic: f64,
}

/// AIC and BIC of a fixed-lambda fit over `n` documents and `p` terms.
pub fn information_criteria(result: &ClusteringResult, model: &MixtureModel, n: usize, p: usize) -> Result<Criteria> {
    if !matches!(model.metadata.lambda_mode, LambdaMode::Fixed(_)) {
        return Err(Error::InvalidArgument(
            "information criteria need a fit with lambda held fixed".into(),
        ));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("criteria need n > 0 and p > 0".into()));
    }
    let k = model.k();
    let nu = (k - 1) + k * (p - 1);
    let ll = result.partial_loglik;
    Ok(Criteria {
        k,
        nu,
        partial_loglik: ll,
        lambda: model.lambda,
        aic: -2.0 * ll + 2.0 * nu as f64,
        bic: -2.0 * ll + nu as f64 * (n as f64).ln(),
    })
}

/// Criteria for every candidate and the k chosen by each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub criteria: Vec<Criteria>,
    pub best_aic: usize,
    pub best_bic: usize,
}

/// Compare fits that share lambda, documents and vocabulary. Ties favour the
/// smaller k.
pub fn select_k(fits: &[(&MixtureModel, &ClusteringResult)]) -> Result<KSelection> {
    let (first, _) = fits
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fits to compare".into()))?;
    let mut criteria = Vec::with_capacity(fits.len());
    for (model, result) in fits {
        if model.lambda.to_bits() != first.lambda.to_bits() {
            return Err(Error::MixedLambda);
        }
        if model.vocabulary_fingerprint != first.vocabulary_fingerprint {
            return Err(Error::VocabularyMismatch {
                model: first.vocabulary_fingerprint.clone(),
                matrix: model.vocabulary_fingerprint.clone(),
            });
        }
        if model.metadata.n_docs != first.metadata.n_docs {
            return Err(Error::InvalidArgument("fits cover different document sets".into()));
        }
        criteria.push(information_criteria(result, model, model.metadata.n_docs, model.metadata.n_terms)?);
    }
    let pick = |key: fn(&Criteria) -> f64| {
        let mut best = &criteria[0];
        for c in &criteria[1..] {
            if key(c) < key(best) || (key(c) == key(best) && c.k < best.k) {
                best = c;
            }
        }
        best.k
    };
    let best_aic = pick(|c| c.aic);
    let best_bic = pick(|c| c.bic);
    Ok(KSelection {
        criteria,
        best_aic,
        best_bic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Centroid;
    use crate::mixture::{FitMetadata, Posteriors};

    fn fake(k: usize, lambda: f64, ll: f64) -> (MixtureModel, ClusteringResult) {
        let model = MixtureModel {
            centroids: (0..k).map(|_| Centroid::from_direction(vec![1.0, 1.0, 1.0]).unwrap()).collect(),
            weights: vec![1.0 / k as f64; k],
            lambda,
            vocabulary_fingerprint: "fp".into(),
            metadata: FitMetadata {
                seed: None,
                alpha: 0.05,
                lambda_mode: LambdaMode::Fixed(lambda),
                n_docs: 50,
                n_terms: 3,
                iterations: 1,
            },
        };
        let result = ClusteringResult {
            posteriors: Posteriors::new(0, k, vec![]).unwrap(),
            hard_labels: vec![],
            partial_loglik: ll,
            n_iterations: 1,
            converged: true,
            loglik_trace: vec![ll],
        };
        (model, result)
    }

    #[test]
    fn equal_loglik_prefers_smaller_k() {
        let a = fake(2, 3.0, -10.0);
        let b = fake(3, 3.0, -10.0);
        let sel = select_k(&[(&b.0, &b.1), (&a.0, &a.1)]).unwrap();
        assert_eq!((sel.best_aic, sel.best_bic), (2, 2));
        let c = information_criteria(&a.1, &a.0, 50, 3).unwrap();
        assert_eq!(c.nu, 1 + 2 * 2);
        assert_eq!(c.aic, 20.0 + 10.0);
        assert!((c.bic - (20.0 + 5.0 * 50f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn mixed_lambda_rejected() {
        let a = fake(2, 3.0, -10.0);
        let b = fake(3, 3.5, -9.0);
        assert!(matches!(select_k(&[(&a.0, &a.1), (&b.0, &b.1)]), Err(Error::MixedLambda)));
    }

    #[test]
    fn resolve_mode_fit_has_no_criteria() {
        let (mut m, r) = fake(2, 3.0, -1.0);
        m.metadata.lambda_mode = LambdaMode::ResolveEachIter;
        assert!(information_criteria(&r, &m, 50, 3).is_err());
    }
}
