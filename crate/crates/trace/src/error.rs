use thiserror::Error;

use crate::kernel::KernelError;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown token '{0}'")]
    UnknownToken(String),

    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error("training diverged at step {step}: loss {loss:.4} exceeded 10x initial {initial:.4} for {window} consecutive steps")]
    Diverged {
        step: u64,
        loss: f64,
        initial: f64,
        window: u64,
    },

    #[error("spectral estimation failed at iteration {iter}: {reason}")]
    Spectral { iter: usize, reason: String },

    #[error("sample-size error: {0}")]
    SampleSize(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("corpus error: {0}")]
    Corpus(#[from] absynth::AbsynthError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, TraceError>;
