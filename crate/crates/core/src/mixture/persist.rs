//! Versioned JSON model files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{e_step, ClusteringResult, MixtureModel};
use crate::textprep::DocTermMatrix;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "cosmix-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a MixtureModel,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: MixtureModel,
}

impl MixtureModel {
    pub fn to_json(&self) -> Result<String> {
        let env = EnvelopeRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_string_pretty(&env).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(raw).map_err(|e| Error::Parse(format!("model file: {e}")))?;
        if env.format != MODEL_FORMAT {
            return Err(Error::Parse(format!("not a model file (format {:?})", env.format)));
        }
        if env.version != MODEL_VERSION {
            return Err(Error::Parse(format!("unsupported model version {}", env.version)));
        }
        env.model.validate()?;
        Ok(env.model)
    }
}

pub fn save_model(model: &MixtureModel, path: &Path) -> Result<()> {
    let mut json = model.to_json()?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MixtureModel> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MixtureModel::from_json(&raw)
}

/// Posteriors and hard labels of `matrix` under a fitted model.
pub fn classify(model: &MixtureModel, matrix: &DocTermMatrix) -> Result<ClusteringResult> {
    let (posteriors, ll) = e_step(model, matrix)?;
    Ok(ClusteringResult {
        hard_labels: posteriors.hard_labels(),
        posteriors,
        partial_loglik: ll,
        n_iterations: 0,
        converged: true,
        loglik_trace: vec![ll],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{fit_em, CalibrationTarget, EmOptions, Init, LambdaMode};
    use crate::textprep::{Vocabulary, Weighting};

    #[test]
    fn round_trip_reproduces_posteriors() {
        let x = DocTermMatrix::from_dense(
            &[
                vec![1.3, 0.2, 0.0],
                vec![1.1, 0.0, 0.1],
                vec![0.0, 0.7, 2.9],
                vec![0.1, 0.3, 1.7],
            ],
            Vocabulary::new(["a", "b", "c"].map(String::from)),
            Weighting::IdfWeighted,
        )
        .unwrap();
        let (model, result) = fit_em(
            &x,
            2,
            CalibrationTarget::default(),
            &Init::Labels(vec![Some(0), Some(0), Some(1), Some(1)]),
            LambdaMode::ResolveEachIter,
            EmOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        let again = classify(&loaded, &x).unwrap();
        assert_eq!(again.posteriors, result.posteriors);
        assert_eq!(again.partial_loglik.to_bits(), result.partial_loglik.to_bits());
    }

    #[test]
    fn wrong_vocabulary_is_rejected() {
        let x = DocTermMatrix::from_dense(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            Vocabulary::new(["a", "b"].map(String::from)),
            Weighting::IdfWeighted,
        )
        .unwrap();
        let (model, _) = fit_em(
            &x,
            2,
            CalibrationTarget::default(),
            &Init::Labels(vec![Some(0), Some(1)]),
            LambdaMode::Fixed(3.0),
            EmOptions::default(),
        )
        .unwrap();
        let y = DocTermMatrix::from_dense(
            &[vec![1.0, 0.0]],
            Vocabulary::new(["a", "z"].map(String::from)),
            Weighting::IdfWeighted,
        )
        .unwrap();
        assert!(matches!(classify(&model, &y), Err(Error::VocabularyMismatch { .. })));
        assert!(MixtureModel::from_json("{\"format\":\"other\",\"version\":1,\"model\":null}").is_err());
    }
}
