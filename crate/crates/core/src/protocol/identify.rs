use rand::Rng;

use crate::bus::{Bus, MessageClass, Payload, PartyId};
use crate::error::{Error, Result};
use crate::field_sss::{Dealer, FieldElement, Party, Session};
use crate::ot::{decode_limbs, encode_limbs, limbs_for_bytes, lookup_triples, ot_lookup, share_table, TableRow, IDENTITY_BYTES};

use super::parties::{Ga, Mo};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identification {
    pub mo: u16,
    pub index: u32,
    pub score: u64,
    pub identity: Vec<u8>,
    /// Rows the operator saw the lookup range over.
    pub window: (usize, usize),
}

/// The operator uploads `(index, Enc(score))` for every row; the GA decrypts
/// and verifies each score.
pub fn upload_scores<R: Rng + ?Sized>(bus: &mut Bus, ga: &Ga, mo: &Mo, rng: &mut R) -> Result<Vec<(u32, u64)>> {
    let items = mo
        .records
        .iter()
        .map(|r| (r.index as u64, mo.rerandomize(&r.enc_score, rng)))
        .collect();
    let width = mo.pk.cipher_bits();
    bus.send(mo.party(), ga.id(), MessageClass::ScoreUpload, Payload::IndexedCiphers { items, width_bits: width })?;
    bus.recv(ga.id(), mo.party(), MessageClass::ScoreUpload)?
        .into_indexed_ciphers()?
        .into_iter()
        .map(|(index, c)| Ok((index as u32, ga.decrypt_score(&c)?)))
        .collect()
}

/// An `η`-row window containing `index`, with the index's offset drawn
/// uniformly and the window shifted back inside the table at the edges.
pub fn choose_window<R: Rng + ?Sized>(index: usize, eta: u64, n_rows: usize, rng: &mut R) -> Result<(usize, usize)> {
    if index >= n_rows || eta == 0 {
        return Err(Error::Usage(format!("cannot place a {eta}-row window around row {index} of {n_rows}")));
    }
    let eta = (eta as usize).min(n_rows);
    let offset = rng.gen_range(0..eta);
    let lo = index.saturating_sub(offset).min(n_rows - eta);
    Ok((lo, lo + eta - 1))
}

/// One oblivious lookup of `index` among `rows`, opened to the GA only.
pub(crate) fn ot_fetch<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    holder: PartyId,
    rows: &[TableRow],
    index: u32,
    rng: &mut R,
) -> Result<Vec<FieldElement>> {
    let width = rows.first().map_or(0, |r| r.value.len());
    let mut pre = dealer.deal(bus, holder, PartyId::Ga, lookup_triples(rows.len(), width), 0)?;
    let mut s = Session::new(bus, holder, PartyId::Ga, &mut pre);
    let table = share_table(&mut s, Party::P1, rows, rng)?;
    let query = s.share_inputs(Party::P2, &[FieldElement::new(index as u64)], rng)?;
    let value = ot_lookup(&mut s, &table, query[0])?;
    let opened = s.open_to(Party::P2, &value)?;
    if opened.iter().all(|v| *v == FieldElement::ZERO) {
        return Err(Error::Protocol(format!("lookup of row {index} matched nothing")));
    }
    Ok(opened)
}

pub(crate) fn identity_rows(mo: &Mo, lo: usize, hi: usize) -> Result<Vec<TableRow>> {
    let width = limbs_for_bytes(IDENTITY_BYTES);
    mo.records[lo..=hi]
        .iter()
        .map(|r| {
            Ok(TableRow {
                attribute: r.index as u64,
                value: encode_limbs(&r.identity, width)?,
            })
        })
        .collect()
}

fn identify<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    ga: &Ga,
    mo: &Mo,
    chi: u64,
    eta: Option<u64>,
    rng: &mut R,
) -> Result<Vec<Identification>> {
    let mut scores = upload_scores(bus, ga, mo, rng)?;
    scores.retain(|&(_, s)| s >= chi);
    scores.sort_unstable();
    let n_rows = mo.records.len();
    let mut out = Vec::with_capacity(scores.len());
    for (index, score) in scores {
        let window = match eta {
            Some(eta) => {
                let (lo, hi) = choose_window(index as usize, eta, n_rows, rng)?;
                bus.send(ga.id(), mo.party(), MessageClass::WindowDisclosure, Payload::Indices(vec![lo as u64, hi as u64]))?;
                let w = bus.recv(mo.party(), ga.id(), MessageClass::WindowDisclosure)?.into_indices()?;
                match w.as_slice() {
                    &[lo, hi] if lo <= hi && (hi as usize) < n_rows => (lo as usize, hi as usize),
                    _ => return Err(Error::Protocol("malformed window disclosure".into())),
                }
            }
            None => (0, n_rows - 1),
        };
        let rows = identity_rows(mo, window.0, window.1)?;
        let limbs = ot_fetch(bus, dealer, mo.party(), &rows, index, rng)?;
        out.push(Identification {
            mo: mo.id,
            index,
            score,
            identity: decode_limbs(&limbs, IDENTITY_BYTES)?,
            window,
        });
    }
    Ok(out)
}

/// GA learns the identity of every subscriber of `mo` whose score is at least `chi`.
pub fn ga_triggered_identify<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    ga: &Ga,
    mo: &Mo,
    chi: u64,
    rng: &mut R,
) -> Result<Vec<Identification>> {
    identify(bus, dealer, ga, mo, chi, None, rng)
}

/// As [`ga_triggered_identify`], searching only a public window of
/// `eta_minus + eta_plus` rows around each target.
pub fn ga_triggered_identify_windowed<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    ga: &Ga,
    mo: &Mo,
    chi: u64,
    eta_minus: u64,
    eta_plus: u64,
    rng: &mut R,
) -> Result<Vec<Identification>> {
    let eta = eta_minus + eta_plus;
    if eta == 0 {
        return Err(Error::Usage("window must hold at least one row".into()));
    }
    identify(bus, dealer, ga, mo, chi, Some(eta), rng)
}
