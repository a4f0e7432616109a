use thiserror::Error;

/// Everything that can go wrong in this crate.
///
/// The variants are coarse on purpose: callers branch on *kind* (bad user
/// input vs. internal failure), while the message carries the specifics.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numeric value left its legal domain (NaN, ±inf, negative where
    /// a non-negative is required, ...).
    #[error("numeric domain: {0}")]
    Numeric(String),

    /// An operation was called in a state that does not admit it
    /// (backward on an empty tape, update after a monitor triggered, ...).
    #[error("invalid state: {0}")]
    State(String),

    /// Raw data could not be ingested (ragged CSV, non-numeric cell, ...).
    #[error("ingestion: {0}")]
    Ingestion(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// A serialized artifact (tensor file, manifest) is malformed.
    #[error("format: {0}")]
    Format(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Training(String),

    /// A prediction cache was asked for something it does not hold.
    #[error("cache miss: {0}")]
    CacheMiss(String),

    /// Promotion is undefined because the baseline metric is zero.
    #[error("undefined promotion: {0}")]
    UndefinedPromotion(String),

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by user-supplied input (files, flags,
    /// configuration) rather than by a bug or an unexpected runtime failure.
    /// The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Ingestion(_) | Error::Format(_)
        )
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
