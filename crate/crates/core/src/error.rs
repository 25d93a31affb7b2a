use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error(
        "SVD failed to converge for a {rows}x{cols} matrix (condition estimate {condition:e})"
    )]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        condition: f64,
    },

    #[error("latent dimension {requested} exceeds numerical rank: sigma_{requested} = {sigma:e}")]
    RankExceeded { requested: usize, sigma: f64 },

    #[error(
        "second-moment factor is rank deficient (sigma_min = {sigma_min:e}, cutoff {cutoff:e}); \
         regularize the second moment, e.g. add delta*I with delta = 1e-10*trace/n"
    )]
    RankDeficientFactor { sigma_min: f64, cutoff: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("refusing to materialize {entries} entries (limit {limit})")]
    TooLarge { entries: usize, limit: usize },

    #[error("IDX parse error: {0}")]
    Idx(#[from] crate::datasets::idx::IdxError),

    #[error("PMAT error in {path}: {reason}")]
    Pmat { path: PathBuf, reason: String },

    #[error("hash mismatch for {file}: manifest {expected}, found {actual}")]
    HashMismatch {
        file: String,
        expected: String,
        actual: String,
    },

    #[error("unsupported schema version {found} (this build reads up to {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
