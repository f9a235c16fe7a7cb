//! End-to-end stages shared by the CLI and the library: corpus to weighted
//! matrix, matrix to a fitted mixture (with an optional sweep over k), and a
//! sequence of epochs to an evolution graph.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_evolution_graph, fit_semisupervised, match_vocabulary, migration_matrix, EpochClusters, MatchWeighting,
    MigrationGraph, MigrationMatrix, SemiSupervisedFit, Thresholds,
};
use crate::featsel::{select_by_threshold, select_top_n, term_entropy, EntropyProfile};
use crate::geometry::{spherical_kmeans, KMeansFit};
use crate::ingest::Document;
use crate::mixture::{
    average_lambda_over_k, fit_em, select_k, CalibrationTarget, ClusteringResult, Criteria, EmOptions, Init,
    LambdaAtK, LambdaMode, MixtureModel,
};
use crate::report::top_terms;
use crate::textprep::{apply_idf, build_matrix, idf_weights, DocTermMatrix, StopwordPolicy};
use crate::{Error, Result};

/// Which columns survive entropy selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSelection {
    Threshold(f64),
    TopN(usize),
    All,
}

impl Default for TermSelection {
    fn default() -> Self {
        TermSelection::Threshold(0.40)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrepOptions {
    pub stopwords: StopwordPolicy,
    pub selection: TermSelection,
    /// Recompute IDF on the selected columns instead of keeping the weights
    /// computed before selection. Both give the same matrix because IDF only
    /// depends on document frequencies and `n`.
    pub reweight_after_selection: bool,
}

/// A corpus ready for clustering.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Corpus ids, one per matrix row.
    pub doc_ids: Vec<usize>,
    /// Raw counts over every stem.
    pub raw: DocTermMatrix,
    pub entropy: Option<EntropyProfile>,
    /// IDF-weighted matrix over the selected terms.
    pub matrix: DocTermMatrix,
    /// Documents with no terms at all.
    pub empty_docs: Vec<usize>,
    /// Rows of `matrix` that are zero (includes `empty_docs`).
    pub zeroed_docs: Vec<usize>,
}

/// Tokenize, count, select terms by entropy and weight by IDF.
pub fn prepare(docs: &[Document], options: &PrepOptions) -> Result<Prepared> {
    let built = build_matrix(docs, &options.stopwords)?;
    let raw = built.matrix;
    let (entropy, selected) = match options.selection {
        TermSelection::All => (None, raw.clone()),
        sel => {
            let profile = term_entropy(&raw)?;
            let selected = match sel {
                TermSelection::Threshold(tau) => select_by_threshold(&raw, &profile, tau)?,
                TermSelection::TopN(n) => select_top_n(&raw, &profile, n)?,
                TermSelection::All => unreachable!(),
            };
            (Some(profile), selected)
        }
    };
    let matrix = if options.reweight_after_selection {
        apply_idf(&selected)?
    } else {
        let full = apply_idf(&raw)?;
        let keep: Vec<usize> = selected
            .vocabulary()
            .terms()
            .iter()
            .filter_map(|t| full.vocabulary().id(t))
            .collect();
        full.select_columns(&keep)
    };
    if matrix.n_terms() == 0 {
        return Err(Error::EmptySelection);
    }
    let zeroed_docs = matrix.zero_rows();
    if !zeroed_docs.is_empty() {
        log::warn!("{} documents have no selected terms", zeroed_docs.len());
    }
    Ok(Prepared {
        doc_ids: docs.iter().map(|d| d.doc_id).collect(),
        raw,
        entropy,
        matrix,
        empty_docs: built.empty_docs,
        zeroed_docs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

/// Where the precision comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    /// Mean of per-k calibrated values over `ks`, then held fixed.
    Averaged { ks: Vec<usize> },
    /// Re-solved from the target rate at every M-step.
    Resolve,
    Fixed(f64),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Averaged {
            ks: (2..=20).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub target: CalibrationTarget,
    /// Candidate numbers of clusters; one value means no selection.
    pub ks: Vec<usize>,
    pub lambda: LambdaChoice,
    pub criterion: Criterion,
    /// k-means restarts for initialization and lambda averaging.
    pub n_runs: usize,
    pub seed: u64,
    pub em: EmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            target: CalibrationTarget::default(),
            ks: (2..=20).collect(),
            lambda: LambdaChoice::default(),
            criterion: Criterion::Aic,
            n_runs: 5,
            seed: 0,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KFit {
    pub k: usize,
    pub model: MixtureModel,
    pub result: ClusteringResult,
}

#[derive(Debug, Clone)]
pub struct StaticFit {
    /// Lambda used by every fixed-lambda fit, if one was shared.
    pub lambda_bar: Option<f64>,
    pub lambda_per_k: Vec<LambdaAtK>,
    pub fits: Vec<KFit>,
    /// k values whose fit failed, with the reason.
    pub failed: Vec<(usize, String)>,
    /// Empty unless several k were compared.
    pub criteria: Vec<Criteria>,
    /// Index into `fits` of the chosen fit.
    pub chosen: usize,
}

impl StaticFit {
    pub fn best(&self) -> &KFit {
        &self.fits[self.chosen]
    }

    /// CSV `k,nu,partial_loglik,lambda,aic,bic`.
    pub fn criteria_csv(&self) -> String {
        let mut s = String::from("k,nu,partial_loglik,lambda,aic,bic\n");
        for c in &self.criteria {
            s.push_str(&format!("{},{},{},{},{},{}\n", c.k, c.nu, c.partial_loglik, c.lambda, c.aic, c.bic));
        }
        s
    }
}

/// Fit the mixture at each candidate k and keep the best by the chosen criterion.
pub fn fit_static(matrix: &DocTermMatrix, options: &FitOptions) -> Result<StaticFit> {
    if options.ks.is_empty() {
        return Err(Error::InvalidArgument("empty k range".into()));
    }
    if let Some(&k) = options.ks.iter().find(|&&k| k < 2) {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut ks = options.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let sweep = ks.len() > 1;
    let n_runs = options.n_runs.max(1);

    let (mode, lambda_bar, lambda_per_k, starts): (LambdaMode, Option<f64>, Vec<LambdaAtK>, Vec<(usize, KMeansFit)>) =
        match &options.lambda {
            LambdaChoice::Averaged { ks: avg_ks } => {
                let avg = average_lambda_over_k(matrix, avg_ks, options.target, n_runs, options.seed)?;
                log::info!("lambda averaged over {} values of k: {}", avg_ks.len(), avg.lambda_bar);
                (LambdaMode::Fixed(avg.lambda_bar), Some(avg.lambda_bar), avg.per_k, avg.kmeans)
            }
            LambdaChoice::Fixed(l) => (LambdaMode::Fixed(*l), Some(*l), Vec::new(), Vec::new()),
            LambdaChoice::Resolve => {
                if sweep {
                    return Err(Error::InvalidArgument(
                        "comparing k needs a shared fixed lambda, not per-iteration re-solving".into(),
                    ));
                }
                (LambdaMode::ResolveEachIter, None, Vec::new(), Vec::new())
            }
        };

    let outcomes: Vec<(usize, Result<(MixtureModel, ClusteringResult)>)> = ks
        .par_iter()
        .map(|&k| {
            let labels = match starts.iter().find(|(kk, _)| *kk == k) {
                Some((_, f)) => Ok(f.labels.clone()),
                None => spherical_kmeans(matrix, k, n_runs, options.seed).map(|f| f.labels),
            };
            let fit = labels.and_then(|l| fit_em(matrix, k, options.target, &Init::Labels(l), mode, options.em));
            (k, fit)
        })
        .collect();

    let mut fits = Vec::new();
    let mut failed = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok((mut model, result)) => {
                model.metadata.seed = Some(options.seed);
                fits.push(KFit { k, model, result });
            }
            Err(e) if sweep => {
                log::warn!("fit at k={k} failed: {e}");
                failed.push((k, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if fits.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every candidate k failed: {}",
            failed.iter().map(|(k, e)| format!("k={k}: {e}")).collect::<Vec<_>>().join("; ")
        )));
    }
    let (criteria, chosen) = if fits.len() > 1 {
        let pairs: Vec<_> = fits.iter().map(|f| (&f.model, &f.result)).collect();
        let sel = select_k(&pairs)?;
        let best_k = match options.criterion {
            Criterion::Aic => sel.best_aic,
            Criterion::Bic => sel.best_bic,
        };
        let chosen = fits.iter().position(|f| f.k == best_k).expect("selected k was fitted");
        (sel.criteria, chosen)
    } else {
        (Vec::new(), 0)
    };
    Ok(StaticFit {
        lambda_bar,
        lambda_per_k,
        fits,
        failed,
        criteria,
        chosen,
    })
}

/// How epoch-`t` counts are weighted after matching to the vocabulary of `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchIdf {
    #[default]
    SourceIdf,
    TargetIdf,
    RawCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicOptions {
    pub prep: PrepOptions,
    pub fit: FitOptions,
    /// Per-epoch candidate k, overriding `fit.ks`.
    pub epoch_ks: Option<Vec<Vec<usize>>>,
    pub match_idf: MatchIdf,
    pub thresholds: Thresholds,
    /// Terms joined into each node label.
    pub label_terms: usize,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        DynamicOptions {
            prep: PrepOptions::default(),
            fit: FitOptions::default(),
            epoch_ks: None,
            match_idf: MatchIdf::default(),
            thresholds: Thresholds::default(),
            label_terms: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochFit {
    pub label: String,
    pub prepared: Prepared,
    pub fit: StaticFit,
}

/// Projection of epoch `t` onto the clusters of `t + 1`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub shared_terms: usize,
    pub emptied_docs: Vec<usize>,
    pub semisupervised: SemiSupervisedFit,
    pub migration: MigrationMatrix,
}

#[derive(Debug, Clone)]
pub struct DynamicRun {
    pub epochs: Vec<EpochFit>,
    pub projections: Vec<Projection>,
    pub graph: MigrationGraph,
}

/// Fit every epoch, project each onto its successor and link the clusters.
pub fn run_dynamic(epochs: &[(String, Vec<Document>)], options: &DynamicOptions) -> Result<DynamicRun> {
    if epochs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "dynamic analysis needs at least 2 epochs, got {}",
            epochs.len()
        )));
    }
    if let Some(eks) = &options.epoch_ks {
        if eks.len() != epochs.len() {
            return Err(Error::DimensionMismatch {
                expected: epochs.len(),
                actual: eks.len(),
            });
        }
    }
    let fitted: Vec<EpochFit> = epochs
        .par_iter()
        .enumerate()
        .map(|(t, (label, docs))| {
            let prepared = prepare(docs, &options.prep)?;
            let mut fit_opts = options.fit.clone();
            if let Some(eks) = &options.epoch_ks {
                fit_opts.ks = eks[t].clone();
            }
            let fit = fit_static(&prepared.matrix, &fit_opts)?;
            Ok(EpochFit {
                label: label.clone(),
                prepared,
                fit,
            })
        })
        .collect::<Result<_>>()?;

    let projections: Vec<Projection> = (0..fitted.len() - 1)
        .into_par_iter()
        .map(|t| project(&fitted[t], &fitted[t + 1], options.match_idf, options.fit.em))
        .collect::<Result<_>>()?;

    let clusters: Vec<EpochClusters> = fitted
        .iter()
        .map(|e| {
            let best = e.fit.best();
            let mut members = vec![Vec::new(); best.k];
            for (j, &l) in best.result.hard_labels.iter().enumerate() {
                members[l].push(j);
            }
            EpochClusters {
                label: e.label.clone(),
                sizes: members.iter().map(Vec::len).collect(),
                names: members
                    .iter()
                    .map(|m| {
                        top_terms(&e.prepared.matrix, m, options.label_terms)
                            .into_iter()
                            .map(|t| t.term)
                            .collect::<Vec<_>>()
                            .join("-")
                    })
                    .collect(),
            }
        })
        .collect();
    let migrations: Vec<MigrationMatrix> = projections.iter().map(|p| p.migration.clone()).collect();
    let graph = build_evolution_graph(&clusters, &migrations, options.thresholds)?;
    Ok(DynamicRun {
        epochs: fitted,
        projections,
        graph,
    })
}

fn project(from: &EpochFit, to: &EpochFit, idf: MatchIdf, em: EmOptions) -> Result<Projection> {
    let target = to.prepared.matrix.vocabulary();
    let weighting = match idf {
        MatchIdf::SourceIdf => MatchWeighting::SourceIdf,
        MatchIdf::RawCounts => MatchWeighting::RawCounts,
        MatchIdf::TargetIdf => {
            let raw = &to.prepared.raw;
            let w = idf_weights(raw);
            MatchWeighting::TargetIdf(
                target
                    .terms()
                    .iter()
                    .map(|t| raw.vocabulary().id(t).map_or(0.0, |h| w[h]))
                    .collect(),
            )
        }
    };
    let matched = match_vocabulary(&from.prepared.raw, target, &weighting)?;
    let next = to.fit.best();
    let semi = fit_semisupervised(
        &matched.matrix,
        &to.prepared.matrix,
        &next.result.hard_labels,
        &next.model.centroids,
        next.model.lambda,
        em,
    )?;
    let current = from.fit.best();
    let migration = migration_matrix(&current.result.hard_labels, current.k, &semi.projected, next.k)?;
    Ok(Projection {
        shared_terms: matched.shared_terms,
        emptied_docs: matched.emptied_docs,
        semisupervised: semi,
        migration,
    })
}
