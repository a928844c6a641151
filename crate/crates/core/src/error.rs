//! Error types shared across the crate.

use thiserror::Error;

/// All fallible operations in this crate return this error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A system file failed to parse or validate. `row` is 1-based and counts
    /// data rows (the header is row 0).
    #[error("system file row {row}, field `{field}`: {message}")]
    InvalidSystem {
        row: usize,
        field: String,
        message: String,
    },

    /// A dispatch vector does not match the system's unit count.
    #[error("dispatch has {got} entries but the system has {expected} units")]
    DimensionMismatch { expected: usize, got: usize },

    /// A demand outside the aggregate generation limits.
    #[error("demand {pd} MW is outside the feasible range [{pd_min}, {pd_max}] MW")]
    InfeasibleDemand { pd: f64, pd_min: f64, pd_max: f64 },

    /// Invalid configuration (empty parent set, bad sigma, malformed run config, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Replay lookup found no record for the requested key.
    #[error("no replay fixture for fingerprint {fingerprint} and model `{model}`")]
    FixtureMiss { fingerprint: String, model: String },

    /// HTTP-level failure talking to a model endpoint.
    #[error("transport failure for model `{model}`: {message}")]
    Transport { model: String, message: String },

    /// Missing or rejected credentials.
    #[error("auth failure for model `{model}`: {message}")]
    Auth { model: String, message: String },

    /// The endpoint did not answer within the configured timeout.
    #[error("model `{model}` timed out after {seconds}s")]
    Timeout { model: String, seconds: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
