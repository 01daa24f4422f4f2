use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid profile at cut layer {cut}: {reason}")]
    InvalidProfile { cut: usize, reason: String },

    #[error("cut layer {0} is not in the admissible set")]
    UnknownCutLayer(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty vehicle set")]
    EmptyVehicleSet,

    #[error("vehicle {id} is outside coverage: travelled {travelled} m of {diameter} m")]
    OutsideCoverage { id: usize, travelled: f64, diameter: f64 },

    #[error("vehicle {vehicle} is infeasible: {reason}")]
    Infeasible { vehicle: usize, reason: String },

    #[error("no eligible vehicles in this round")]
    NoEligibleVehicles,

    #[error("brute-force oracle supports at most {max} vehicles, got {got}")]
    TooManyVehicles { max: usize, got: usize },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("stale activation cache: {0}")]
    StaleActivation(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("probability vector mismatch: {0}")]
    ProbabilityMismatch(String),

    #[error("missing results: {0}")]
    MissingResults(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
