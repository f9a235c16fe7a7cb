use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vocabulary mismatch: model {model} vs matrix {matrix}")]
    VocabularyMismatch { model: String, matrix: String },

    #[error("entropy undefined for single-document corpus")]
    SingleDocumentEntropy,

    #[error("threshold removed all terms")]
    EmptySelection,

    #[error("degenerate cluster: all weighted rows are zero")]
    DegenerateCluster,

    #[error("corpus too concentrated for requested alpha {requested}; attainable alpha is below {attainable}")]
    TooConcentrated { requested: f64, attainable: f64 },

    #[error("lambda calibration has no finite root: tied distances keep the consistent rate below the target")]
    NoFiniteRoot,

    #[error("lambda undefined for single component")]
    SingleComponent,

    #[error("lambda calibration failed for every k in the range")]
    CalibrationFailed,

    #[error("component {component} collapsed at iteration {iteration}")]
    ComponentCollapse { component: usize, iteration: usize },

    #[error("criteria invalid across differing lambda")]
    MixedLambda,

    #[error("disjoint vocabularies")]
    DisjointVocabularies,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical procedures (calibration, EM, degenerate
    /// geometry), as opposed to malformed data or arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCluster
                | Error::TooConcentrated { .. }
                | Error::NoFiniteRoot
                | Error::SingleComponent
                | Error::CalibrationFailed
                | Error::ComponentCollapse { .. }
                | Error::MixedLambda
        )
    }
}
