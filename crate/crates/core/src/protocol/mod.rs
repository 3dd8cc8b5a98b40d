//! Party state machines for the GA, the operators and their users, and the
//! tracing, scoring, reveal, identification and anti-cheat flows between them.

mod anticheat;
mod audit;
mod engine;
mod identify;
mod parties;
mod reveal;
mod scoring;
mod tracing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sss::SHARE_BITS;

pub use anticheat::{
    anti_cheat_ga_flow, anti_cheat_ga_flow_with, anti_cheat_mo_flow, CounterfeitStrategy, HonestGa, MaskPair,
};
pub use audit::{audit, AuditReport};
pub use engine::{run_protocol, LocCheck, RunReport};
pub use identify::{
    choose_window, ga_triggered_identify, ga_triggered_identify_windowed, upload_scores, Identification,
};
pub use parties::{identity_for, Ga, InfectionRegistry, Mo, ScoreAccumulator, User, UserRecord};
pub use reveal::{user_triggered_reveal, Revealed};
pub use scoring::{deliver_statuses, loc_score, score_update, score_update_local, ScoreUpdateOutcome};
pub use tracing::{local_contacts, trace_contacts_round, CellInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    /// Contact distance threshold, meters.
    pub th: u32,
    pub chi: u64,
    pub eta_minus: u64,
    pub eta_plus: u64,
    pub b: u32,
    pub k: usize,
    pub timestep: f64,
    pub duration: f64,
    pub cell_size_l: u32,
    pub key_bits: usize,
    /// Exponent length of the fixed-base noise generator; 0 draws full-width noise.
    pub noise_bits: u64,
    /// Deliver a fresh status ciphertext every instant instead of once per period.
    pub per_instant_status: bool,
    /// Use the `η`-row window during GA-triggered identification.
    pub windowed: bool,
    /// GA scales statuses by a secret `Token_GA` and checks divisibility on decryption.
    pub token_ga: bool,
    /// Location scores requested per run, by randomly drawn users.
    pub loc_queries: usize,
    /// Upper bound on cross-operator pairs evaluated per preprocessing batch.
    pub pair_batch: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            th: 2,
            chi: 10,
            eta_minus: 100,
            eta_plus: 100,
            b: SHARE_BITS,
            k: 2,
            timestep: 20.0,
            duration: 300.0,
            cell_size_l: 10,
            key_bits: crate::paillier::TEST_KEY_BITS,
            noise_bits: 256,
            per_instant_status: false,
            windowed: false,
            token_ga: false,
            loc_queries: 200,
            pair_batch: 4096,
        }
    }
}

impl SessionConfig {
    /// Number of rows in an identification window.
    pub fn eta(&self) -> u64 {
        self.eta_minus + self.eta_plus
    }

    pub fn n_instants(&self) -> usize {
        if self.timestep <= 0.0 {
            return 0;
        }
        (self.duration / self.timestep).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Usage(format!("{field}: {why}")));
        if (self.th as u64).pow(2) >= 1 << SHARE_BITS {
            return bad("th", format!("th² must stay below 2^{SHARE_BITS}"));
        }
        if self.chi < 1 {
            return bad("chi", "must be at least 1".into());
        }
        if self.eta() < 1 {
            return bad("eta_minus", "window must hold at least one row".into());
        }
        if self.b != SHARE_BITS {
            return bad("b", format!("only {SHARE_BITS}-bit shares are supported"));
        }
        if self.k < 2 {
            return bad("k", "at least two operators are required".into());
        }
        if self.timestep <= 0.0 || self.duration < 0.0 {
            return bad("timestep", "timestep must be positive and duration non-negative".into());
        }
        if self.cell_size_l == 0 || self.cell_size_l >= crate::geo::COORD_LIMIT {
            return bad("cell_size_l", format!("must lie in [1, {})", crate::geo::COORD_LIMIT));
        }
        if self.pair_batch == 0 {
            return bad("pair_batch", "must be positive".into());
        }
        Ok(())
    }
}

/// Borrows two distinct elements mutably.
pub(crate) fn pair_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.eta(), 200);
        assert_eq!(cfg.n_instants(), 15);
    }

    #[test]
    fn rejects_bad_fields() {
        for cfg in [
            SessionConfig { chi: 0, ..Default::default() },
            SessionConfig { k: 1, ..Default::default() },
            SessionConfig { eta_minus: 0, eta_plus: 0, ..Default::default() },
            SessionConfig { b: 20, ..Default::default() },
            SessionConfig { th: 6000, ..Default::default() },
            SessionConfig { cell_size_l: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn pair_mut_both_orders() {
        let mut v = [1, 2, 3];
        let (a, b) = pair_mut(&mut v, 2, 0);
        std::mem::swap(a, b);
        assert_eq!(v, [3, 2, 1]);
    }
}
