use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("regions {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("problem too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("pairwise term between nodes {i} and {j} is not submodular (excess {excess:e})")]
    SubmodularityViolation { i: usize, j: usize, excess: f64 },
    #[error("transport plan has not converged to a permutation")]
    NotConverged,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
