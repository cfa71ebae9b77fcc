use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbsynthError {
    /// Configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A perturbed Zipf weight came out non-positive.
    #[error("non-positive zipf weight at rank {rank}: {weight}")]
    NonPositiveWeight { rank: usize, weight: f64 },

    /// A frame slot has no candidate tokens.
    #[error("generation error in frame '{frame}': empty candidate set for slot {slot} ({category})")]
    EmptyCandidateSet {
        frame: String,
        slot: usize,
        category: String,
    },

    /// A frame failed slot-order validation.
    #[error("frame '{frame}' is not grammatical: {reason}")]
    InvalidFrame { frame: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AbsynthError>;
