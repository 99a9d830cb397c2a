use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate cell {0} (zero volume)")]
    DegenerateCell(usize),

    #[error("hypersurface does not separate the domain: {0}")]
    NotSeparating(String),

    #[error("eta is not aligned with the grid (eta = {eta}, spacing = {spacing})")]
    NotGridAligned { eta: f64, spacing: f64 },

    #[error("factorization failed: zero pivot at row {row} (shift {shift})")]
    Factorization { row: usize, shift: f64 },

    #[error("singular reduced system: {0}")]
    Singular(String),

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("fixed-point iteration diverged (observed contraction ratio {ratio:.3})")]
    Divergence { ratio: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("missing table `{0}` in report")]
    MissingTable(String),

    #[error("scenario stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
