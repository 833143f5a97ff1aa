//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by problem construction, structure handling and the
/// environment.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point handed to `evaluate` had the wrong shape or non-finite entries.
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// A structure failed validation; the position is the index of the
    /// offending module in flattened order.
    #[error("illegal structure at position {position}: {reason}")]
    IllegalStructure { position: usize, reason: String },

    /// The structure sampler painted itself into a corner (no legal candidate
    /// for a slot). This should be unreachable given the chaining rules.
    #[error("structure generation stuck at slot {slot}: {reason}")]
    GenerationStuck { slot: usize, reason: String },

    /// A module id did not decode to a registered variant.
    #[error("unknown module id {0:#06x}")]
    UnknownModule(u16),

    /// An environment call violated its contract (wrong action shape,
    /// non-finite raw actions, stepping a finished episode, …).
    #[error("environment misuse: {0}")]
    EnvMisuse(String),

    /// Serialization or I/O failure when reading/writing artifacts.
    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serde(e.to_string())
    }
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Serde(e.to_string())
    }
}
