use rand::Rng;

use crate::bus::{Bus, MessageClass, Payload};
use crate::error::{Error, Result};
use crate::mobility::CellId;
use crate::paillier::{self, Ciphertext};

use super::parties::{Ga, Mo};
use super::pair_mut;

/// GA sends every operator the encrypted statuses of its subscribers for instant `t`.
pub fn deliver_statuses<R: Rng + ?Sized>(bus: &mut Bus, ga: &Ga, mos: &mut [Mo], t: usize, rng: &mut R) -> Result<()> {
    let width = ga.public_key().cipher_bits();
    for mo in mos.iter_mut() {
        let items = mo
            .users
            .iter()
            .map(|&u| ga.encrypt_status(u, t, rng))
            .collect::<Result<Vec<_>>>()?;
        bus.send(ga.id(), mo.party(), MessageClass::StatusCiphertext, Payload::Ciphers { items, width_bits: width })?;
        let got = bus.recv(mo.party(), ga.id(), MessageClass::StatusCiphertext)?.into_ciphers()?;
        if got.len() != mo.users.len() {
            return Err(Error::Protocol(format!("MO{} received {} statuses", mo.id, got.len())));
        }
        mo.statuses.push(got);
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScoreUpdateOutcome {
    pub applied: usize,
    /// Contacts skipped because a status ciphertext was missing.
    pub deferred: Vec<(u32, u32)>,
}

/// Each side forwards a freshly rerandomized `Enc(s)` of its own subscriber
/// for every cross-operator contact, keyed by the contact's position in
/// the shared list.
fn forward<R: Rng + ?Sized>(
    bus: &mut Bus,
    from: &Mo,
    to: &Mo,
    own: impl Fn(usize) -> u32,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<Vec<Option<Ciphertext>>> {
    let mut items = Vec::with_capacity(n);
    for k in 0..n {
        if let Some(c) = from.row(own(k)).and_then(|r| from.status(r, t)) {
            items.push((k as u64, from.rerandomize(c, rng)));
        }
    }
    let width = from.pk.cipher_bits();
    bus.send(from.party(), to.party(), MessageClass::ForwardedStatus, Payload::IndexedCiphers { items, width_bits: width })?;
    let got = bus.recv(to.party(), from.party(), MessageClass::ForwardedStatus)?.into_indexed_ciphers()?;
    let mut out = vec![None; n];
    for (k, c) in got {
        let slot = out
            .get_mut(k as usize)
            .ok_or_else(|| Error::Protocol(format!("forwarded status for unknown contact {k}")))?;
        *slot = Some(c);
    }
    Ok(out)
}

/// Adds the partner's encrypted status to each side's accumulator for every
/// contact `(user of mos[a], user of mos[b])` at instant `t`.
pub fn score_update<R: Rng + ?Sized>(
    bus: &mut Bus,
    mos: &mut [Mo],
    a: usize,
    b: usize,
    contacts: &[(u32, u32)],
    t: usize,
    rng: &mut R,
) -> Result<ScoreUpdateOutcome> {
    let mut outcome = ScoreUpdateOutcome::default();
    if contacts.is_empty() {
        return Ok(outcome);
    }
    let (mo_a, mo_b) = pair_mut(mos, a, b);
    let to_a = forward(bus, mo_b, mo_a, |k| contacts[k].1, contacts.len(), t, rng)?;
    let to_b = forward(bus, mo_a, mo_b, |k| contacts[k].0, contacts.len(), t, rng)?;
    for (k, &(i, j)) in contacts.iter().enumerate() {
        match (mo_a.row(i), mo_b.row(j), &to_a[k], &to_b[k]) {
            (Some(ri), Some(rj), Some(sj), Some(si)) => {
                mo_a.add_to_score(ri, sj);
                mo_b.add_to_score(rj, si);
                outcome.applied += 1;
            }
            _ => outcome.deferred.push((i, j)),
        }
    }
    Ok(outcome)
}

/// Contacts between two subscribers of the same operator need no traffic.
pub fn score_update_local(mo: &mut Mo, contacts: &[(u32, u32)], t: usize) -> ScoreUpdateOutcome {
    let mut outcome = ScoreUpdateOutcome::default();
    for &(i, j) in contacts {
        let rows = (mo.row(i), mo.row(j));
        let (Some(ri), Some(rj)) = rows else {
            outcome.deferred.push((i, j));
            continue;
        };
        match (mo.status(ri, t).cloned(), mo.status(rj, t).cloned()) {
            (Some(si), Some(sj)) => {
                mo.add_to_score(ri, &sj);
                mo.add_to_score(rj, &si);
                outcome.applied += 1;
            }
            _ => outcome.deferred.push((i, j)),
        }
    }
    outcome
}

/// Encrypted count of positives other than `user` inside `cell` at `t`,
/// assembled by `mos[k]` from its own statuses and one rerandomized sum from
/// every other operator.
#[allow(clippy::too_many_arguments)]
pub fn loc_score<R: Rng + ?Sized>(
    bus: &mut Bus,
    mos: &[Mo],
    k: usize,
    user: u32,
    cell: CellId,
    t: usize,
    l: u32,
    rng: &mut R,
) -> Result<Ciphertext> {
    let home = &mos[k];
    let mut acc = home.sum_statuses_in(cell, t, l, Some(user))?;
    let query = Payload::Indices(vec![cell.0 as u64, cell.1 as u64, t as u64]);
    for (m, other) in mos.iter().enumerate() {
        if m == k {
            continue;
        }
        bus.send(home.party(), other.party(), MessageClass::LocQuery, query.clone())?;
        let q = bus.recv(other.party(), home.party(), MessageClass::LocQuery)?.into_indices()?;
        let &[cx, cy, qt] = q.as_slice() else {
            return Err(Error::Protocol("malformed location query".into()));
        };
        let sum = other.sum_statuses_in((cx as u32, cy as u32), qt as usize, l, None)?;
        let reply = Payload::Ciphers {
            items: vec![other.rerandomize(&sum, rng)],
            width_bits: other.pk.cipher_bits(),
        };
        bus.send(other.party(), home.party(), MessageClass::LocReply, reply)?;
        let got = bus.recv(home.party(), other.party(), MessageClass::LocReply)?.into_ciphers()?;
        let [c] = got.as_slice() else {
            return Err(Error::Protocol("location reply must hold one ciphertext".into()));
        };
        acc = paillier::add_cipher(&acc, c, &home.pk);
    }
    Ok(acc)
}
