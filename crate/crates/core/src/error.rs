use std::io;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("symbol {symbol} at position {position} is outside the alphabet of size {alphabet}")]
    SymbolOutOfAlphabet {
        symbol: u32,
        position: usize,
        alphabet: u32,
    },

    #[error("non-finite input value at index {0}")]
    NonFinite(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sequence too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("memory budget exceeded: {needed} bytes needed, budget is {budget} bytes")]
    MemoryBudget { needed: u64, budget: u64 },

    #[error("all {rows} rows were skipped under the memory budget of {budget} bytes")]
    AllRowsSkipped { rows: usize, budget: u64 },

    #[error("Blahut iteration did not converge after {iterations} iterations (bound gap {gap:.3e} bits)")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("could not bracket target rate {target} bits (last rate {last_rate} bits at beta {last_beta})")]
    RateNotBracketed {
        target: f64,
        last_rate: f64,
        last_beta: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
