//! Privacy-preserving contact tracing across several mobile operators.
//!
//! Operators detect contacts between their subscribers with two-party
//! secret-shared computation, accumulate exposure scores over ciphertexts
//! issued by a governmental authority, and deliver scores without any single
//! party learning both identities and infection statuses.

pub mod accounting;
pub mod bus;
pub mod error;
pub mod field_sss;
pub mod geo;
pub mod mobility;
pub mod ot;
pub mod paillier;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
