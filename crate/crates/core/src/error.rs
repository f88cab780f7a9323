use thiserror::Error;

/// Toolkit-wide error type; every variant is qualified by the module that
/// raised it so CLI consumers can map failures back to a subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data: {0}")]
    Data(String),

    #[error("preprocess: {0}")]
    Preprocess(String),

    #[error("models: {0}")]
    Model(String),

    /// Training loss left the finite range; the last finite checkpoint is
    /// reported so callers can diagnose step sizes.
    #[error("models: training diverged at epoch {epoch}; last finite objective {last_objective}")]
    TrainDiverged { epoch: usize, last_objective: f64 },

    #[error("mmd: {0}")]
    Mmd(String),

    #[error("theory: {0}")]
    Theory(String),

    #[error("ensemble: {0}")]
    Ensemble(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    /// A metric has no defined value on the given inputs (e.g. AUC on a
    /// single-class fold). Callers decide whether to exclude-with-record.
    #[error("evaluation: undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("downstream: {0}")]
    Downstream(String),

    #[error("synthgen: {0}")]
    Synth(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
