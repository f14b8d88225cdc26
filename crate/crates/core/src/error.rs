use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("rank-deficient input: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("cannot draw {requested} distinct indices from {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("exact inclusion probabilities limited to m <= {max}, got m = {m}; use Monte Carlo")]
    ExactTooLarge { m: usize, max: usize },

    #[error("projector missing on non-refresh step {step}")]
    MissingProjector { step: u64 },

    #[error("basis is not orthonormal: max |U^T U - I| = {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon T = {t} is below the admissible threshold {threshold}")]
    InadmissibleHorizon { t: u64, threshold: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
