use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("state space too large: {paths} paths exceed limit {limit}")]
    Size { paths: f64, limit: usize },

    #[error(
        "targets (E[C]={target_c}, E[G]={target_g}) unattainable; achievable E[C] in ({c_range:?}), E[G] in ({g_range:?})"
    )]
    Infeasible {
        target_c: f64,
        target_g: f64,
        c_range: (f64, f64),
        g_range: (f64, f64),
    },

    #[error("transition odds undefined: {0}")]
    UndefinedOdds(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("comparison refused: {0}")]
    ComparisonRefused(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
