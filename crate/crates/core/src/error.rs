use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid sample: {0}")]
    Sample(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible target ratio {target} for group {group}: {reason}")]
    InfeasibleRatio {
        group: usize,
        target: f64,
        reason: &'static str,
    },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("regression failed: {0}")]
    Regression(&'static str),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error(
        "training diverged at epoch {epoch}, batch {batch}: loss {loss}, max |logit| {max_abs_logit}"
    )]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        max_abs_logit: f64,
    },
    #[error("model file truncated: {0}")]
    Truncated(&'static str),
    #[error("bad model file: {0}")]
    Format(String),
    #[error("schema digest mismatch: model was trained for a different feature schema")]
    DigestMismatch,
}
