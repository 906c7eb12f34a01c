use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum UleeError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("placement failed for spec seed {seed} after {attempts} attempts")]
    Placement { seed: u64, attempts: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical fault in {location}: {detail}")]
    Numerical { location: String, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("pool error: {0}")]
    Pool(String),

    /// Outer-loop faults carry the batch index and the failing
    /// environment's spec seed so the run can be replayed from the
    /// per-purpose rng streams.
    #[error("batch {batch} (env seed {env_seed}): {source}")]
    Batch {
        batch: usize,
        env_seed: u64,
        source: Box<UleeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for UleeError {
    fn from(e: serde_json::Error) -> Self {
        UleeError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, UleeError>;
