use thiserror::Error;

/// Errors raised across the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("graph is empty after preprocessing (min_reviews = {min_reviews})")]
    EmptyGraph { min_reviews: usize },

    #[error("unknown node: {0}")]
    UnknownNode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability vector is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("evaluation set contains a single class")]
    SingleClass,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
