use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bus::{LedgerEntry, MessageClass, PartyId, Phase};

/// Violations of the knowledge partition found in a bus log.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub plaintext_status_to_mo: usize,
    pub plaintext_coordinate_to_ga: usize,
    /// Sharing batches of which some non-owner received both evaluation points.
    pub reconstructable_share_pairs: usize,
    /// GA-issued lookup queries during identification.
    pub ot_invocations: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.plaintext_status_to_mo == 0 && self.plaintext_coordinate_to_ga == 0 && self.reconstructable_share_pairs == 0
    }
}

pub fn audit(log: &[LedgerEntry]) -> AuditReport {
    let mut report = AuditReport::default();
    let mut points: BTreeMap<(u64, PartyId), BTreeSet<u8>> = BTreeMap::new();
    for e in log {
        match (e.class, e.receiver) {
            (MessageClass::PlaintextStatus, PartyId::Mo(_)) => report.plaintext_status_to_mo += 1,
            (MessageClass::PlaintextCoordinate, PartyId::Ga) => report.plaintext_coordinate_to_ga += 1,
            // coordinates only ever travel during tracing, and never to the GA
            (_, PartyId::Ga) if e.phase == Phase::Tracing => report.plaintext_coordinate_to_ga += 1,
            _ => {}
        }
        if let Some(tag) = e.share_tag {
            if e.receiver != tag.owner {
                points.entry((tag.batch, e.receiver)).or_default().insert(tag.eval_point);
            }
            if e.phase == Phase::GaTriggered && tag.owner == PartyId::Ga {
                report.ot_invocations += 1;
            }
        }
    }
    report.reconstructable_share_pairs = points.values().filter(|p| p.len() > 1).count();
    report
}
