use thiserror::Error;

use crate::bus::{MessageClass, PartyId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("share belongs to {found:?}, expected {expected:?}")]
    PartyMismatch {
        expected: crate::field_sss::Party,
        found: crate::field_sss::Party,
    },

    #[error("beaver triple {0} consumed twice")]
    TripleReuse(u64),

    #[error("insufficient preprocessing: needed {needed} {kind}, {available} available")]
    InsufficientPreprocessing {
        kind: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("timed out waiting for {class:?} from {from} at {to}")]
    Timeout {
        from: PartyId,
        to: PartyId,
        class: MessageClass,
    },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("prime generation failed after {0} attempts")]
    PrimeGeneration(usize),

    #[error("integrity failure: {0}")]
    Integrity(String),

    #[error("cheat detected: {0}")]
    CheatDetected(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
