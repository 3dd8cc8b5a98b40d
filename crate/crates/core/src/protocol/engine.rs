use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::accounting::{
    ga_triggered_windowed_cost, score_phase_cost, trajectory_tracing_cost, user_triggered_cost, OverheadLedger,
    RunModel, TracingCost,
};
use crate::bus::{Bus, Phase};
use crate::error::{Error, Result};
use crate::field_sss::Dealer;
use crate::geo::PlanePoint;
use crate::mobility::{cell_of, ground_truth, loc_count, relative_in_cell, CellId, GroundTruth, Trajectory};
use crate::paillier::{self, NoiseTable};
use crate::rng;

use super::audit::{audit, AuditReport};
use super::identify::{ga_triggered_identify, ga_triggered_identify_windowed, Identification};
use super::parties::{identity_for, Ga, InfectionRegistry, Mo, User};
use super::reveal::user_triggered_reveal;
use super::scoring::{deliver_statuses, score_update, score_update_local};
use super::tracing::{local_contacts, trace_contacts_round, CellInput};
use super::SessionConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocCheck {
    pub user: u32,
    pub cell: CellId,
    pub t: usize,
    pub revealed: u64,
    pub expected: u64,
}

pub struct RunReport {
    pub revealed: Vec<u64>,
    pub ground_truth: GroundTruth,
    pub loc_checks: Vec<LocCheck>,
    pub identified: Vec<Identification>,
    /// Global pseudonym of each identified row.
    pub identified_users: Vec<u32>,
    pub cross_contacts: usize,
    pub local_contacts: usize,
    pub deferred: usize,
    pub audit: AuditReport,
    pub model: RunModel,
    pub tracing: TracingCost,
    pub bus: Bus,
}

impl RunReport {
    pub fn score_mismatches(&self) -> usize {
        self.revealed
            .iter()
            .zip(&self.ground_truth.scores)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn loc_mismatches(&self) -> usize {
        self.loc_checks.iter().filter(|c| c.revealed != c.expected).count()
    }

    /// Users expected to be identified at threshold `chi`.
    pub fn expected_identified(&self, chi: u64) -> Vec<u32> {
        (0..self.ground_truth.scores.len() as u32)
            .filter(|&u| self.ground_truth.scores[u as usize] >= chi)
            .collect()
    }

    pub fn identity_mismatches(&self, chi: u64) -> usize {
        let mut got: Vec<u32> = self.identified_users.clone();
        got.sort_unstable();
        let expected = self.expected_identified(chi);
        let wrong_bytes = self
            .identified
            .iter()
            .zip(&self.identified_users)
            .filter(|(id, &u)| id.identity != identity_for(u))
            .count();
        wrong_bytes + usize::from(got != expected)
    }

    pub fn contact_mismatches(&self) -> usize {
        (self.cross_contacts + self.local_contacts).abs_diff(self.ground_truth.contact_count())
    }

    pub fn is_correct(&self, chi: u64) -> bool {
        self.score_mismatches() == 0
            && self.loc_mismatches() == 0
            && self.identity_mismatches(chi) == 0
            && self.contact_mismatches() == 0
            && self.deferred == 0
    }

    pub fn ledger(&self) -> OverheadLedger {
        OverheadLedger::from_bus(&self.bus)
    }
}

/// Operator-side partition of its own subscribers, cell-relative positions.
fn partition_rows(mo: &Mo, t: usize, l: u32) -> BTreeMap<CellId, Vec<(u32, PlanePoint)>> {
    let mut cells: BTreeMap<CellId, Vec<(u32, PlanePoint)>> = BTreeMap::new();
    for (row, &p) in mo.positions[t].iter().enumerate() {
        cells.entry(cell_of(p, l)).or_default().push((mo.users[row], relative_in_cell(p, l)));
    }
    cells
}

/// Runs every phase over a trajectory and checks the revealed values
/// against the plaintext oracle.
pub fn run_protocol(traj: &Trajectory, cfg: &SessionConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let k = traj.n_mos();
    if traj.n_users() > 0 && k != cfg.k {
        return Err(Error::Usage(format!("trajectory has {k} operators, configuration expects {}", cfg.k)));
    }
    let k = cfg.k;
    let l = cfg.cell_size_l;
    let n_instants = traj.n_instants();
    let n_users = traj.n_users();

    let mut key_rng = rng::stream(seed, "keys");
    let (pk, sk) = paillier::keygen(cfg.key_bits, &mut key_rng)?;
    let noise = |name: &str| {
        (cfg.noise_bits > 0).then(|| NoiseTable::new(&pk, cfg.noise_bits, &mut rng::stream(seed, name)))
    };
    let token_ga = cfg
        .token_ga
        .then(|| rng::stream(seed, "token_ga").gen_range(2..1u64 << 32));
    let score_bound = (n_instants as u64 * n_users.saturating_sub(1) as u64).max(1);
    let ga = Ga::new(
        pk.clone(),
        sk,
        InfectionRegistry::new(traj.positive.clone()),
        token_ga,
        noise("noise/GA"),
        score_bound,
    );

    let mut mos = Vec::with_capacity(k);
    for m in 0..k {
        let users: Vec<u32> = (0..n_users as u32).filter(|&u| traj.mo[u as usize] as usize == m).collect();
        let identities = users.iter().map(|&u| identity_for(u)).collect();
        let positions = traj
            .positions
            .iter()
            .map(|row| users.iter().map(|&u| row[u as usize]).collect())
            .collect();
        mos.push(Mo::new(m as u16, pk.clone(), users, identities, positions, noise(&format!("noise/MO{m}")))?);
    }

    let mut bus = Bus::new();
    let mut dealer = Dealer::new(rng::derive_u64(seed, "dealer"));
    let mut share_rng = rng::stream(seed, "shares");
    let mut cipher_rng = rng::stream(seed, "ciphers");

    let mut cross = 0;
    let mut local = 0;
    let mut deferred = 0;
    let mut deliveries = 0;
    for t in 0..n_instants {
        bus.set_round(t as u32);
        if t == 0 || cfg.per_instant_status {
            bus.set_phase(Phase::Scoring);
            deliver_statuses(&mut bus, &ga, &mut mos, t, &mut cipher_rng)?;
            deliveries += 1;
        }

        bus.set_phase(Phase::Tracing);
        let parts: Vec<_> = mos.iter().map(|mo| partition_rows(mo, t, l)).collect();
        let mut cross_sets = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let cells: Vec<CellInput> = parts[a]
                    .iter()
                    .filter_map(|(cell, users_a)| {
                        parts[b].get(cell).map(|users_b| CellInput {
                            cell: *cell,
                            a: users_a.clone(),
                            b: users_b.clone(),
                        })
                    })
                    .collect();
                let contacts =
                    trace_contacts_round(&mut bus, &mut dealer, a as u16, b as u16, &cells, cfg.th, cfg.pair_batch, &mut share_rng)?;
                cross += contacts.len();
                cross_sets.push((a, b, contacts));
            }
        }
        let local_sets: Vec<Vec<(u32, u32)>> = parts
            .iter()
            .map(|cells| cells.values().flat_map(|users| local_contacts(users, cfg.th)).collect())
            .collect();

        bus.set_phase(Phase::Scoring);
        for (a, b, contacts) in &cross_sets {
            deferred += score_update(&mut bus, &mut mos, *a, *b, contacts, t, &mut cipher_rng)?.deferred.len();
        }
        for (mo, contacts) in mos.iter_mut().zip(&local_sets) {
            local += contacts.len();
            deferred += score_update_local(mo, contacts, t).deferred.len();
        }
    }

    // a sample of users each ask for one location score
    let mut loc_rng = rng::stream(seed, "locations");
    let mut loc_requests: HashMap<u32, Vec<(CellId, usize)>> = HashMap::new();
    if n_users > 0 && n_instants > 0 {
        for _ in 0..cfg.loc_queries {
            let u = loc_rng.gen_range(0..n_users as u32);
            let t = loc_rng.gen_range(0..n_instants);
            let cell = cell_of(traj.positions[t][u as usize], l);
            loc_requests.entry(u).or_default().push((cell, t));
        }
    }

    bus.set_round(n_instants as u32);
    bus.set_phase(Phase::UserTriggered);
    let mut token_rng = rng::stream(seed, "tokens");
    let mut revealed = vec![0; n_users];
    let mut loc_checks = Vec::new();
    let cipher_bits = pk.cipher_bits();
    let mut user_bits = 0;
    for u in 0..n_users as u32 {
        let user = User { id: u, mo: traj.mo[u as usize] };
        let locs = loc_requests.get(&u).map(Vec::as_slice).unwrap_or(&[]);
        let r = user_triggered_reveal(&mut bus, &ga, &mos, &user, locs, l, &mut token_rng)?;
        revealed[u as usize] = r.score;
        user_bits += user_triggered_cost(cipher_bits, locs.len() as u64);
        for (&(cell, t), &got) in locs.iter().zip(&r.loc_scores) {
            loc_checks.push(LocCheck {
                user: u,
                cell,
                t,
                revealed: got,
                expected: loc_count(traj, u, cell, t, l),
            });
        }
    }

    bus.set_round(n_instants as u32 + 1);
    bus.set_phase(Phase::GaTriggered);
    let mut window_rng = rng::stream(seed, "windows");
    let mut identified = Vec::new();
    let mut identified_users = Vec::new();
    let mut ga_bits = 0;
    let gt = ground_truth(traj, cfg.th, l)?;
    for mo in &mos {
        let found = if cfg.windowed {
            ga_triggered_identify_windowed(&mut bus, &mut dealer, &ga, mo, cfg.chi, cfg.eta_minus, cfg.eta_plus, &mut window_rng)?
        } else {
            ga_triggered_identify(&mut bus, &mut dealer, &ga, mo, cfg.chi, &mut window_rng)?
        };
        let n_k = mo.users.len() as u64;
        let eta = if cfg.windowed { cfg.eta().min(n_k) } else { n_k };
        ga_bits += ga_triggered_windowed_cost(found.len() as u64, eta, cfg.b as u64, n_k);
        identified_users.extend(found.iter().map(|id| mo.users[id.index as usize]));
        identified.extend(found);
    }

    let tracing = if n_instants > 0 && n_users > 0 {
        trajectory_tracing_cost(traj, l, cfg.b as u64)?
    } else {
        TracingCost::default()
    };
    let score = score_phase_cost(n_users as u64, cipher_bits, cross as u64);
    let model = RunModel {
        tracing_bits: tracing.total_bits,
        score_bits: deliveries * score.ga_to_mos_bits + score.inter_mo_bits,
        user_triggered_bits: user_bits,
        ga_triggered_bits: ga_bits,
    };
    Ok(RunReport {
        revealed,
        ground_truth: gt,
        loc_checks,
        identified,
        identified_users,
        cross_contacts: cross,
        local_contacts: local,
        deferred,
        audit: audit(bus.log()),
        model,
        tracing,
        bus,
    })
}
