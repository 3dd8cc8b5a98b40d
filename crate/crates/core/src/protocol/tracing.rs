use rand::Rng;

use crate::accounting::contact_eval_cost;
use crate::bus::{Bus, PartyId, TracingCharge};
use crate::error::Result;
use crate::field_sss::{Dealer, FieldElement, Party, Preprocessing, Session, COMP_BITS, COMP_TRIPLES, SHARE_BITS};
use crate::geo::{contact_plain, sec_contact_many, sec_square_dist_many, PlanePoint};
use crate::mobility::CellId;

/// Subscribers of two operators inside one cell, with cell-relative positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellInput {
    pub cell: CellId,
    pub a: Vec<(u32, PlanePoint)>,
    pub b: Vec<(u32, PlanePoint)>,
}

impl CellInput {
    pub fn pairs(&self) -> u64 {
        (self.a.len() * self.b.len()) as u64
    }
}

/// Contacts among one operator's own subscribers, evaluated in the clear.
pub fn local_contacts(users: &[(u32, PlanePoint)], th: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (k, &(i, p)) in users.iter().enumerate() {
        for &(j, q) in &users[k + 1..] {
            if contact_plain(p, q, th).0 {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out
}

fn coordinates(users: &[&(u32, PlanePoint)]) -> Vec<FieldElement> {
    let mut out = Vec::with_capacity(2 * users.len());
    out.extend(users.iter().map(|(_, p)| FieldElement::new(p.x as u64)));
    out.extend(users.iter().map(|(_, p)| FieldElement::new(p.y as u64)));
    out
}

/// Secure contact detection between `mo_a` and `mo_b` over every listed cell
/// at the bus's current round. Each operator shares fresh coordinates, and
/// the pair set `(user of mo_a, user of mo_b)` is opened to both.
///
/// Any transport failure aborts the whole round: pending messages are
/// discarded and no contacts or charges are produced.
pub fn trace_contacts_round<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    mo_a: u16,
    mo_b: u16,
    cells: &[CellInput],
    th: u32,
    pair_batch: usize,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    match run_round(bus, dealer, mo_a, mo_b, cells, th, pair_batch, rng) {
        Ok(contacts) => {
            let round = bus.round();
            for c in cells.iter().filter(|c| c.pairs() > 0) {
                bus.charge_tracing(TracingCharge {
                    round,
                    cell: (c.cell.0 as i64, c.cell.1 as i64),
                    mo_a,
                    mo_b,
                    pairs: c.pairs(),
                    bits: c.pairs() * contact_eval_cost(SHARE_BITS as u64),
                });
            }
            Ok(contacts)
        }
        Err(e) => {
            bus.drain_pending();
            Err(e)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_round<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    mo_a: u16,
    mo_b: u16,
    cells: &[CellInput],
    th: u32,
    pair_batch: usize,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    let total: u64 = cells.iter().map(CellInput::pairs).sum();
    if total == 0 {
        return Ok(Vec::new());
    }
    let (pa, pb) = (PartyId::Mo(mo_a), PartyId::Mo(mo_b));
    let users_a: Vec<_> = cells.iter().flat_map(|c| &c.a).collect();
    let users_b: Vec<_> = cells.iter().flat_map(|c| &c.b).collect();

    let mut none = Preprocessing::default();
    let (shared_a, shared_b) = {
        let mut s = Session::new(bus, pa, pb, &mut none);
        let sa = s.share_inputs(Party::P1, &coordinates(&users_a), rng)?;
        let sb = s.share_inputs(Party::P2, &coordinates(&users_b), rng)?;
        (sa, sb)
    };
    let (na, nb) = (users_a.len(), users_b.len());

    // (offset into users_a, offset into users_b) for every cross pair
    let mut pairs = Vec::with_capacity(total as usize);
    let (mut off_a, mut off_b) = (0, 0);
    for c in cells {
        for i in 0..c.a.len() {
            for j in 0..c.b.len() {
                pairs.push((off_a + i, off_b + j));
            }
        }
        off_a += c.a.len();
        off_b += c.b.len();
    }

    let mut contacts = Vec::new();
    for chunk in pairs.chunks(pair_batch) {
        let n = chunk.len();
        let mut pre = dealer.deal(bus, pa, pb, n * (2 + COMP_TRIPLES), n * COMP_BITS)?;
        let mut s = Session::new(bus, pa, pb, &mut pre);
        let xi: Vec<_> = chunk.iter().map(|&(i, _)| shared_a[i]).collect();
        let yi: Vec<_> = chunk.iter().map(|&(i, _)| shared_a[na + i]).collect();
        let xj: Vec<_> = chunk.iter().map(|&(_, j)| shared_b[j]).collect();
        let yj: Vec<_> = chunk.iter().map(|&(_, j)| shared_b[nb + j]).collect();
        let d2 = sec_square_dist_many(&mut s, &xi, &yi, &xj, &yj)?;
        let flags = sec_contact_many(&mut s, &d2, th)?;
        contacts.extend(
            chunk
                .iter()
                .zip(flags)
                .filter(|(_, f)| f.0)
                .map(|(&(i, j), _)| (users_a[i].0, users_b[j].0)),
        );
    }
    Ok(contacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{MessageClass, Phase};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cell(a: &[(u32, (u32, u32))], b: &[(u32, (u32, u32))]) -> CellInput {
        let conv = |v: &[(u32, (u32, u32))]| v.iter().map(|&(u, (x, y))| (u, PlanePoint::new(x, y))).collect();
        CellInput {
            cell: (0, 0),
            a: conv(a),
            b: conv(b),
        }
    }

    fn plain(cells: &[CellInput], th: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for c in cells {
            for &(i, p) in &c.a {
                for &(j, q) in &c.b {
                    if contact_plain(p, q, th).0 {
                        out.push((i, j));
                    }
                }
            }
        }
        out
    }

    fn run(cells: &[CellInput], batch: usize) -> (Vec<(u32, u32)>, Bus) {
        let mut bus = Bus::new();
        bus.set_phase(Phase::Tracing);
        let mut dealer = Dealer::new(3);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let out = trace_contacts_round(&mut bus, &mut dealer, 0, 1, cells, 2, batch, &mut rng).unwrap();
        (out, bus)
    }

    #[test]
    fn identical_positions_are_a_contact() {
        let (out, bus) = run(&[cell(&[(0, (4, 4))], &[(1, (4, 4))])], 16);
        assert_eq!(out, vec![(0, 1)]);
        assert_eq!(bus.charges().len(), 1);
        assert_eq!(bus.charges()[0].bits, 11_500);
    }

    #[test]
    fn empty_side_means_no_traffic() {
        let (out, bus) = run(&[cell(&[(0, (4, 4)), (2, (1, 1))], &[])], 16);
        assert!(out.is_empty());
        assert!(bus.log().is_empty());
        assert!(bus.charges().is_empty());
    }

    #[test]
    fn matches_plaintext_over_random_cells() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut cells = Vec::new();
        let mut next = 0u32;
        for c in 0..6u32 {
            let mut side = |n: usize| -> Vec<(u32, PlanePoint)> {
                (0..n)
                    .map(|_| {
                        next += 1;
                        (next, PlanePoint::new(rng.gen_range(0..6), rng.gen_range(0..6)))
                    })
                    .collect()
            };
            let a = side(c as usize % 4 + 1);
            let b = side((c as usize * 3) % 5);
            cells.push(CellInput { cell: (c, 0), a, b });
        }
        let expected = plain(&cells, 2);
        assert!(!expected.is_empty());
        // a small batch forces several preprocessing chunks
        let (out, bus) = run(&cells, 7);
        assert_eq!(out, expected);
        let charged: u64 = bus.charges().iter().map(|c| c.bits).sum();
        let pairs: u64 = cells.iter().map(CellInput::pairs).sum();
        assert_eq!(charged, pairs * 11_500);
        assert_eq!(bus.charges().len(), cells.iter().filter(|c| c.pairs() > 0).count());
    }

    #[test]
    fn fresh_shares_every_round() {
        let cells = [cell(&[(0, (1, 1))], &[(1, (3, 3))])];
        let mut bus = Bus::new();
        let mut dealer = Dealer::new(1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for round in 0..2 {
            bus.set_round(round);
            trace_contacts_round(&mut bus, &mut dealer, 0, 1, &cells, 2, 16, &mut rng).unwrap();
        }
        let batches: std::collections::HashSet<_> = bus
            .log()
            .iter()
            .filter(|e| e.class == MessageClass::InputShare)
            .map(|e| e.share_tag.unwrap().batch)
            .collect();
        assert_eq!(batches.len(), 4);
    }

    #[test]
    fn bus_failure_aborts_without_output() {
        let cells = [cell(&[(0, (1, 1)), (2, (2, 2))], &[(1, (1, 2))])];
        let mut bus = Bus::new();
        let mut dealer = Dealer::new(1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        bus.inject_drop_after(5);
        let err = trace_contacts_round(&mut bus, &mut dealer, 0, 1, &cells, 2, 16, &mut rng);
        assert!(err.is_err());
        assert!(bus.charges().is_empty());
        assert_eq!(bus.pending(), 0);
    }

    #[test]
    fn local_contacts_in_clear() {
        let users = [
            (5, PlanePoint::new(0, 0)),
            (1, PlanePoint::new(1, 1)),
            (7, PlanePoint::new(9, 9)),
        ];
        assert_eq!(local_contacts(&users, 2), vec![(1, 5)]);
    }
}
