//! Error type shared across the library.
//!
//! Shape misuse inside hot numerical kernels panics with a descriptive
//! message (programming error); everything recoverable — configuration,
//! I/O, serialization, numerical failure modes — is reported through
//! [`Error`].

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (widths, scales, fractions, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A scale factor that must be positive was not.
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    /// Training or fitting produced a non-finite value.
    #[error("non-finite value encountered in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    /// Pruning aborted because the loss diverged.
    #[error(
        "loss diverged at level {level}, epoch {epoch}, step {step}: {loss}; \
         diagnostic dump: {dump}"
    )]
    Diverged {
        level: usize,
        epoch: usize,
        step: usize,
        loss: f64,
        dump: String,
    },

    /// Serialized network carries a version this build does not understand.
    #[error("unsupported network format version {0} (this build reads version {1})")]
    UnsupportedVersion(u32, u32),

    /// Per-layer approximation budget collapsed below the useful range.
    #[error(
        "approximation budget underflow at layer {layer}: eps_l = {value:.3e} < 1e-12; \
         use a larger eps or a shallower target"
    )]
    EpsilonUnderflow { layer: usize, value: f64 },

    /// A requested mother-network layer exceeds the memory cap.
    #[error("mother network layer {layer} would need width {width} (cap {cap})")]
    WidthCap { layer: usize, width: usize, cap: usize },

    /// Ticket extraction could not approximate every target parameter.
    #[error("construction failed: {failed} of {total} parameters unsolved; first failures: {examples}")]
    ConstructionFailed {
        failed: usize,
        total: usize,
        examples: String,
    },

    /// One-dimensional fit could not bracket a finite objective.
    #[error("scale fit failed: {0}")]
    FitFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("TOML parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("TOML serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    /// Shorthand for a configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
