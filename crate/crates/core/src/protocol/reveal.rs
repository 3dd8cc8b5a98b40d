use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::bus::{Bus, MessageClass, Payload};
use crate::error::{Error, Result};
use crate::mobility::CellId;
use crate::paillier;

use super::parties::{Ga, Mo, ScoreAccumulator, User};
use super::scoring::loc_score;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Revealed {
    pub score: u64,
    pub loc_scores: Vec<u64>,
}

/// The user fetches its encrypted score (and any location scores) from its
/// operator, masks each ciphertext with a fresh token, has the GA decrypt
/// the masked values, and divides the tokens back out.
pub fn user_triggered_reveal<R: Rng + ?Sized>(
    bus: &mut Bus,
    ga: &Ga,
    mos: &[Mo],
    user: &User,
    locs: &[(CellId, usize)],
    l: u32,
    rng: &mut R,
) -> Result<Revealed> {
    let k = user.mo as usize;
    let mo = mos
        .get(k)
        .filter(|m| m.id == user.mo)
        .ok_or_else(|| Error::Usage(format!("no operator MO{}", user.mo)))?;
    let row = mo
        .row(user.id)
        .ok_or_else(|| Error::Usage(format!("user {} is not a subscriber of MO{}", user.id, user.mo)))?;

    let request: Vec<u64> = locs
        .iter()
        .flat_map(|&((cx, cy), t)| [cx as u64, cy as u64, t as u64])
        .collect();
    bus.send(user.party(), mo.party(), MessageClass::ScoreRequest, Payload::Indices(request))?;
    let request = bus.recv(mo.party(), user.party(), MessageClass::ScoreRequest)?.into_indices()?;
    if request.len() % 3 != 0 {
        return Err(Error::Protocol("malformed score request".into()));
    }
    let mut acc = ScoreAccumulator {
        enc_score: mo.rerandomize(&mo.records[row].enc_score, rng),
        enc_loc_scores: Vec::new(),
    };
    for q in request.chunks_exact(3) {
        let loc = ((q[0] as u32, q[1] as u32), q[2] as usize);
        let c = loc_score(bus, mos, k, user.id, loc.0, loc.1, l, rng)?;
        acc.enc_loc_scores.push((loc, c));
    }

    let width = mo.pk.cipher_bits();
    let mut items = vec![acc.enc_score];
    items.extend(acc.enc_loc_scores.into_iter().map(|(_, c)| c));
    bus.send(mo.party(), user.party(), MessageClass::ScoreCiphertext, Payload::Ciphers { items, width_bits: width })?;
    let received = bus.recv(user.party(), mo.party(), MessageClass::ScoreCiphertext)?.into_ciphers()?;

    let pk = ga.public_key();
    let tokens: Vec<u64> = received.iter().map(|_| user.draw_token(rng)).collect();
    let masked = received
        .iter()
        .zip(&tokens)
        .map(|(c, &t)| paillier::scalar_mul(c, &BigUint::from(t), pk))
        .collect::<Result<Vec<_>>>()?;
    bus.send(user.party(), ga.id(), MessageClass::MaskedScoreCiphertext, Payload::Ciphers { items: masked, width_bits: width })?;

    let at_ga = bus.recv(ga.id(), user.party(), MessageClass::MaskedScoreCiphertext)?.into_ciphers()?;
    let bound = BigUint::from(ga.score_bound()) << 32;
    let masked_bound = ga.masked_bound();
    let plains = at_ga
        .iter()
        .map(|c| ga.unmask(&ga.decrypt_small(c, &masked_bound), &bound))
        .collect::<Result<Vec<_>>>()?;
    let reply = Payload::Integers { items: plains, width_bits: pk.key_bits() };
    bus.send(ga.id(), user.party(), MessageClass::MaskedPlaintext, reply)?;

    let plains = bus.recv(user.party(), ga.id(), MessageClass::MaskedPlaintext)?.into_integers()?;
    if plains.len() != tokens.len() {
        return Err(Error::Protocol("GA answered a different number of values".into()));
    }
    let mut values = Vec::with_capacity(tokens.len());
    for (p, &t) in plains.iter().zip(&tokens) {
        let (q, r) = p.div_rem(&BigUint::from(t));
        if !r.is_zero() {
            return Err(Error::Integrity(format!("GA reply {p} is not a multiple of the user's token")));
        }
        values.push(q.to_u64().ok_or_else(|| Error::Integrity(format!("unmasked value {q} is implausible")))?);
    }
    Ok(Revealed {
        score: values[0],
        loc_scores: values[1..].to_vec(),
    })
}
