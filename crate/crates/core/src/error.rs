use std::path::PathBuf;

use thiserror::Error;

use crate::predictors::Predictor;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("column `{0}` has zero variance")]
    ZeroVarianceColumn(String),

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("SVD did not converge after {0} sweeps")]
    ConvergenceFailure(usize),

    #[error("design matrix is singular or ill-conditioned")]
    SingularDesign,

    #[error("column `{0}` is not centered; standardize before fitting")]
    NotStandardized(String),

    #[error("sensitive Gram matrix B'B is singular or ill-conditioned")]
    SingularSensitiveGram,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operation requires a single sensitive column, got {0}")]
    UnivariateOnly(usize),

    #[error("component {component} did not converge within {iters} iterations")]
    NoConvergence { component: usize, iters: usize },

    #[error("component {0} is degenerate: residual score vector vanished")]
    DegenerateComponent(usize),

    #[error("logistic weights diverged; data are separable")]
    SeparationDetected { predictor: Box<Predictor> },

    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("metric requires discrete sensitive groups")]
    RequiresGroups,

    #[error("processed data not orthogonal to B: max |A~'B| = {0:e}")]
    OrthogonalityViolated(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dataset has no exogenous noise record")]
    MissingNoise,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::ZeroVarianceColumn(_) => "ZeroVarianceColumn",
            Error::RankOutOfRange { .. } => "RankOutOfRange",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::SingularDesign => "SingularDesign",
            Error::NotStandardized(_) => "NotStandardized",
            Error::SingularSensitiveGram => "SingularSensitiveGram",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::UnivariateOnly(_) => "UnivariateOnly",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateComponent(_) => "DegenerateComponent",
            Error::SeparationDetected { .. } => "SeparationDetected",
            Error::FeatureMismatch(_) => "FeatureMismatch",
            Error::SingleClass => "SingleClass",
            Error::RequiresGroups => "RequiresGroups",
            Error::OrthogonalityViolated(_) => "OrthogonalityViolated",
            Error::InvalidParams(_) => "InvalidParams",
            Error::MissingNoise => "MissingNoise",
            Error::Io { .. } => "Io",
            Error::Csv { .. } => "Csv",
            Error::Parse(_) => "Parse",
            Error::Json(_) => "Json",
        }
    }
}
