use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("x = {x} lies outside the spline domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("sample {index} (x = {x}) lies outside the spline domain [{lo}, {hi}]")]
    SampleOutOfDomain {
        index: usize,
        x: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    #[error("degenerate domain: all samples share x = {0}")]
    DegenerateDomain(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient at segment {segment}, power {power}")]
    NonFiniteGradient { segment: usize, power: usize },

    #[error("repair requires degree >= 2k+1 (degree {degree}, k {k})")]
    DegreeTooLow { degree: usize, k: usize },

    #[error("Hermite system is ill-conditioned (condition estimate {condition:.3e}); use a smaller k or shorter segments")]
    IllConditioned { condition: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
