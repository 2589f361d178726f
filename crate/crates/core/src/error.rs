use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("blow-up suspected at t = {t}: {reason}")]
    BlowUpSuspected { t: f64, reason: String },

    #[error("state is not supported on a single particle-number sector")]
    MixedSector,

    #[error("particle number {n} exceeds truncation n_max = {n_max}")]
    TruncationExceeded { n: usize, n_max: usize },

    #[error("Weyl truncation defect {defect:.3e} exceeds 1e-6")]
    WeylTruncation { defect: f64 },

    #[error("unitarity defect {defect:.3e} exceeds tolerance")]
    UnitarityDefect { defect: f64 },

    #[error("Krylov propagation failed: {0}")]
    Krylov(String),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown experiment kind `{0}`")]
    UnknownExperiment(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
