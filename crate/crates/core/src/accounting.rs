//! Analytical traffic and privacy model, and its reconciliation with the bus ledger.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bus::{Bus, LedgerEntry, PartyId, Phase, TracingCharge};
use crate::error::Result;
use crate::mobility::{cell_populations, Trajectory};

pub const BITS_PER_MEGABYTE: u64 = 8_000_000;

pub fn megabytes(bits: u64) -> f64 {
    bits as f64 / BITS_PER_MEGABYTE as f64
}

/// Bits exchanged to decide whether one cross-operator pair is in contact.
pub const fn contact_eval_cost(b: u64) -> u64 {
    18 * b * b + 10 * b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub b: u64,
    pub cipher_bits: u64,
    pub n_users: u64,
    pub n_k: u64,
    pub n_chi: u64,
    pub eta: u64,
}

impl CostModel {
    pub fn tracing_pair(&self) -> u64 {
        contact_eval_cost(self.b)
    }

    pub fn score_phase(&self, contact_count: u64) -> ScorePhaseCost {
        score_phase_cost(self.n_users, self.cipher_bits, contact_count)
    }

    pub fn user_triggered(&self, n_loc_queries: u64) -> u64 {
        user_triggered_cost(self.cipher_bits, n_loc_queries)
    }

    pub fn ga_triggered(&self) -> u64 {
        ga_triggered_cost(self.n_chi, self.n_k, self.b, self.n_users)
    }

    pub fn ga_triggered_windowed(&self) -> u64 {
        ga_triggered_windowed_cost(self.n_chi, self.eta, self.b, self.n_users)
    }
}

/// Cross-operator evaluation cost inside one cell at one instant, given the
/// number of subscribers of each operator present.
pub fn cell_tracing_cost(counts: &[u64], b: u64) -> u64 {
    let mut pairs = 0;
    for (a, &na) in counts.iter().enumerate() {
        for &nb in &counts[a + 1..] {
            pairs += na * nb;
        }
    }
    pairs * contact_eval_cost(b)
}

/// Per-area tracing overhead borne by one operator: its subscribers against
/// every other operator's subscribers in the same cell.
pub fn operator_area_cost(counts: &[u64], mo: usize, b: u64) -> u64 {
    let total: u64 = counts.iter().sum();
    counts[mo] * (total - counts[mo]) * contact_eval_cost(b)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TracingCost {
    pub total_bits: u64,
    /// Mean over occupied cell-instants and operators of the per-operator overhead.
    pub avg_bits: f64,
    /// Largest per-operator overhead over all cell-instants.
    pub max_bits: u64,
    pub occupied_cells: u64,
}

/// `cells` lists the per-operator populations of every occupied cell-instant.
pub fn tracing_phase_cost<'a, I>(cells: I, b: u64) -> TracingCost
where
    I: IntoIterator<Item = &'a [u64]>,
{
    let mut out = TracingCost::default();
    let mut per_mo_sum = 0u128;
    let mut per_mo_count = 0u64;
    for counts in cells {
        if counts.iter().all(|&n| n == 0) {
            continue;
        }
        out.occupied_cells += 1;
        out.total_bits += cell_tracing_cost(counts, b);
        for mo in 0..counts.len() {
            let c = operator_area_cost(counts, mo, b);
            per_mo_sum += c as u128;
            per_mo_count += 1;
            out.max_bits = out.max_bits.max(c);
        }
    }
    if per_mo_count > 0 {
        out.avg_bits = per_mo_sum as f64 / per_mo_count as f64;
    }
    out
}

/// The same per-area statistics recomputed from the charges actually posted
/// to a bus, for `k` operators over `occupied_cells` occupied cell-instants.
pub fn measured_tracing_cost(charges: &[TracingCharge], k: usize, occupied_cells: u64) -> TracingCost {
    let mut per_cell: BTreeMap<(u32, (i64, i64)), Vec<u64>> = BTreeMap::new();
    let mut total = 0;
    for c in charges {
        total += c.bits;
        let slot = per_cell.entry((c.round, c.cell)).or_insert_with(|| vec![0; k]);
        slot[c.mo_a as usize] += c.bits;
        slot[c.mo_b as usize] += c.bits;
    }
    let sum: u128 = per_cell.values().flatten().map(|&v| v as u128).sum();
    let denom = occupied_cells * k as u64;
    TracingCost {
        total_bits: total,
        avg_bits: if denom == 0 { 0.0 } else { sum as f64 / denom as f64 },
        max_bits: per_cell.values().flatten().copied().max().unwrap_or(0),
        occupied_cells,
    }
}

/// Per-area tracing overhead of a whole trajectory partitioned into `l`-squares.
pub fn trajectory_tracing_cost(traj: &Trajectory, l: u32, b: u64) -> Result<TracingCost> {
    let k = traj.n_mos();
    let mut cells = Vec::new();
    for row in &traj.positions {
        cells.extend(cell_populations(row, &traj.mo, k, l)?);
    }
    Ok(tracing_phase_cost(cells.iter().map(Vec::as_slice), b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePhaseCost {
    pub ga_to_mos_bits: u64,
    pub inter_mo_bits: u64,
}

/// One status ciphertext per user per period from the GA, and one ciphertext
/// each way per cross-operator contact.
pub fn score_phase_cost(n_users: u64, cipher_bits: u64, contact_count: u64) -> ScorePhaseCost {
    ScorePhaseCost {
        ga_to_mos_bits: n_users * cipher_bits,
        inter_mo_bits: 2 * contact_count * cipher_bits,
    }
}

pub fn user_triggered_cost(cipher_bits: u64, n_loc_queries: u64) -> u64 {
    (2 + n_loc_queries) * cipher_bits + cipher_bits
}

pub fn ga_triggered_cost(n_chi: u64, n_k: u64, b: u64, n_users: u64) -> u64 {
    14 * n_chi * n_k * b * b + 2 * n_chi * n_k * b + n_users * b
}

pub fn ga_triggered_windowed_cost(n_chi: u64, eta: u64, b: u64, n_users: u64) -> u64 {
    ga_triggered_cost(n_chi, eta, b, n_users)
}

/// Probability that the operator fails to single out a queried row.
pub fn privacy(eta: u64) -> f64 {
    assert!(eta >= 1, "window size must be at least 1");
    1.0 - 1.0 / eta as f64
}

/// Bits moved, keyed by `(phase, sender, receiver)`, plus model-rate tracing charges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadLedger {
    pub counters: BTreeMap<(Phase, PartyId, PartyId), u64>,
    pub tracing_charged: u64,
}

impl OverheadLedger {
    pub fn from_bus(bus: &Bus) -> Self {
        let mut out = Self::from_entries(bus.log());
        out.tracing_charged = bus.charges().iter().map(|c| c.bits).sum();
        out
    }

    pub fn from_entries(entries: &[LedgerEntry]) -> Self {
        let mut counters = BTreeMap::new();
        for e in entries {
            *counters.entry((e.phase, e.sender, e.receiver)).or_insert(0) += e.payload_bits;
        }
        Self {
            counters,
            tracing_charged: 0,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (k, v) in &other.counters {
            *self.counters.entry(*k).or_insert(0) += v;
        }
        self.tracing_charged += other.tracing_charged;
    }

    pub fn phase_bits(&self, phase: Phase) -> u64 {
        self.counters.iter().filter(|(k, _)| k.0 == phase).map(|(_, v)| v).sum()
    }

    pub fn bits_where(&self, phase: Phase, f: impl Fn(PartyId, PartyId) -> bool) -> u64 {
        self.counters
            .iter()
            .filter(|(k, _)| k.0 == phase && f(k.1, k.2))
            .map(|(_, v)| v)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconcileRow {
    pub phase: String,
    pub modeled_bits: u64,
    pub measured_bits: u64,
}

impl ReconcileRow {
    pub fn deviation(&self) -> f64 {
        match (self.modeled_bits, self.measured_bits) {
            (0, 0) => 0.0,
            (0, _) => f64::INFINITY,
            (m, x) => (x as f64 - m as f64) / m as f64,
        }
    }
}

/// Modeled quantities for a completed run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunModel {
    pub tracing_bits: u64,
    pub score_bits: u64,
    pub user_triggered_bits: u64,
    pub ga_triggered_bits: u64,
}

pub fn reconcile(ledger: &OverheadLedger, model: &RunModel) -> Vec<ReconcileRow> {
    let row = |phase: &str, modeled, measured| ReconcileRow {
        phase: phase.to_string(),
        modeled_bits: modeled,
        measured_bits: measured,
    };
    vec![
        row("tracing", model.tracing_bits, ledger.tracing_charged),
        row("tracing_wire", model.tracing_bits, ledger.phase_bits(Phase::Tracing)),
        row("scoring", model.score_bits, ledger.phase_bits(Phase::Scoring)),
        row("user_triggered", model.user_triggered_bits, ledger.phase_bits(Phase::UserTriggered)),
        row("ga_triggered", model.ga_triggered_bits, ledger.phase_bits(Phase::GaTriggered)),
    ]
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_reconcile_csv<W: Write>(rows: &[ReconcileRow], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["phase", "modeled_bits", "measured_bits", "deviation"])?;
    for r in rows {
        out.write_record([
            r.phase.clone(),
            r.modeled_bits.to_string(),
            r.measured_bits.to_string(),
            format!("{:.6}", r.deviation()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub l: u32,
    pub k: usize,
    pub avg_modeled: f64,
    pub avg_measured: Option<f64>,
    pub max_modeled: u64,
    pub max_measured: Option<u64>,
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["l", "k", "metric", "modeled_bits", "measured_bits"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        out.write_record([
            r.l.to_string(),
            r.k.to_string(),
            "avg".into(),
            format!("{:.3}", r.avg_modeled),
            opt(r.avg_measured.map(|v| format!("{v:.3}"))),
        ])?;
        out.write_record([
            r.l.to_string(),
            r.k.to_string(),
            "max".into(),
            r.max_modeled.to_string(),
            opt(r.max_measured.map(|v| v.to_string())),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub eta: u64,
    pub chi: u64,
    pub n_chi: u64,
    pub privacy: f64,
    pub modeled_bits: u64,
}

/// Windowed identification cost for each `(chi, n_chi)` and window size.
pub fn fig3_sweep(n_users: u64, b: u64, chis: &[(u64, u64)], etas: &[u64]) -> Vec<Fig3Row> {
    let mut rows = Vec::with_capacity(chis.len() * etas.len());
    for &(chi, n_chi) in chis {
        for &eta in etas {
            rows.push(Fig3Row {
                eta,
                chi,
                n_chi,
                privacy: privacy(eta),
                modeled_bits: ga_triggered_windowed_cost(n_chi, eta, b, n_users),
            });
        }
    }
    rows
}

pub fn write_fig3_csv<W: Write>(rows: &[Fig3Row], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["eta", "chi", "privacy", "modeled_bits"])?;
    for r in rows {
        out.write_record([
            r.eta.to_string(),
            r.chi.to_string(),
            format!("{:.6}", r.privacy),
            r.modeled_bits.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
