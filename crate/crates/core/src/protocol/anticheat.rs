use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;

use crate::bus::{Bus, MessageClass, Payload};
use crate::error::{Error, Result};
use crate::field_sss::Dealer;
use crate::ot::{decode_limbs, encode_limbs, limbs_for_bytes, TableRow, IDENTITY_BYTES};
use crate::paillier::{self, Ciphertext};

use super::identify::{identity_rows, ot_fetch, upload_scores, Identification};
use super::parties::{Ga, Mo};

/// Secret affine mask `τ1·score + τ2` chosen by an operator for one session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskPair {
    pub tau1: u64,
    pub tau2: u64,
}

impl MaskPair {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            tau1: rng.gen_range(1..1u64 << 32),
            tau2: rng.gen_range(1..1u64 << 32),
        }
    }

    pub fn apply(&self, score: u64) -> BigUint {
        BigUint::from(self.tau1) * score + self.tau2
    }
}

/// How the GA behaves in the masked identification flow.
pub trait CounterfeitStrategy {
    /// Rows the GA asks to have released.
    fn select(&mut self, scores: &[(u32, u64)], chi: u64) -> Vec<u32>;
    /// The `(score, τ1·score + τ2)` pair the GA claims for `index`, given the
    /// decrypted upload and the masked value it retrieved.
    fn claim(&mut self, index: u32, score: u64, masked: &BigUint) -> (u64, BigUint);
}

pub struct HonestGa;

impl CounterfeitStrategy for HonestGa {
    fn select(&mut self, scores: &[(u32, u64)], chi: u64) -> Vec<u32> {
        scores.iter().filter(|&&(_, s)| s >= chi).map(|&(i, _)| i).collect()
    }

    fn claim(&mut self, _index: u32, score: u64, masked: &BigUint) -> (u64, BigUint) {
        (score, masked.clone())
    }
}

pub fn anti_cheat_ga_flow<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    ga: &Ga,
    mo: &Mo,
    chi: u64,
    mask: MaskPair,
    rng: &mut R,
) -> Result<Vec<Identification>> {
    anti_cheat_ga_flow_with(bus, dealer, ga, mo, chi, mask, &mut HonestGa, rng)
}

/// Identification where the operator releases an identity only after the GA
/// proves knowledge of `τ1·score + τ2` for a score at or above `chi`. The
/// masked values reach the GA only through an oblivious lookup over
/// limb-encoded ciphertexts.
#[allow(clippy::too_many_arguments)]
pub fn anti_cheat_ga_flow_with<R: Rng + ?Sized>(
    bus: &mut Bus,
    dealer: &mut Dealer,
    ga: &Ga,
    mo: &Mo,
    chi: u64,
    mask: MaskPair,
    strategy: &mut dyn CounterfeitStrategy,
    rng: &mut R,
) -> Result<Vec<Identification>> {
    if ga.token_ga().is_some() {
        return Err(Error::Usage("the masked identification flow expects untokenized scores".into()));
    }
    let pk = &mo.pk;
    let tau1 = BigUint::from(mask.tau1);
    let width = limbs_for_bytes(pk.cipher_bytes());
    let masked_rows = mo
        .records
        .iter()
        .map(|r| {
            let scaled = paillier::scalar_mul(&r.enc_score, &tau1, pk)?;
            let c = paillier::add_cipher(&scaled, &paillier::encrypt_u64(mask.tau2, pk, rng)?, pk);
            Ok(TableRow {
                attribute: r.index as u64,
                value: encode_limbs(&c.to_bytes(pk), width)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let scores = upload_scores(bus, ga, mo, rng)?;
    let mut targets = strategy.select(&scores, chi);
    targets.sort_unstable();
    targets.dedup();
    let n_rows = mo.records.len();
    let mut out = Vec::with_capacity(targets.len());
    for index in targets {
        let score = scores
            .iter()
            .find(|&&(i, _)| i == index)
            .map(|&(_, s)| s)
            .ok_or_else(|| Error::Usage(format!("row {index} does not exist")))?;
        let limbs = ot_fetch(bus, dealer, mo.party(), &masked_rows, index, rng)?;
        let c = Ciphertext::from_bytes(&decode_limbs(&limbs, pk.cipher_bytes())?, ga.public_key())?;
        let masked = ga.decrypt(&c);
        let (claimed, claimed_mask) = strategy.claim(index, score, &masked);

        let claim = Payload::Integers {
            items: vec![BigUint::from(claimed), claimed_mask],
            width_bits: pk.key_bits(),
        };
        bus.send(ga.id(), mo.party(), MessageClass::AntiCheatClaim, claim)?;
        let got = bus.recv(mo.party(), ga.id(), MessageClass::AntiCheatClaim)?.into_integers()?;
        let [claimed, claimed_mask] = got.as_slice() else {
            return Err(Error::Protocol("malformed anti-cheat claim".into()));
        };
        let claimed = claimed
            .to_u64()
            .ok_or_else(|| Error::CheatDetected(format!("claimed score {claimed} out of range")))?;
        if claimed < chi {
            return Err(Error::CheatDetected(format!("claimed score {claimed} is below the threshold {chi}")));
        }
        if *claimed_mask != mask.apply(claimed) {
            return Err(Error::CheatDetected(format!("masked value does not match claimed score {claimed}")));
        }

        let rows = identity_rows(mo, 0, n_rows - 1)?;
        let limbs = ot_fetch(bus, dealer, mo.party(), &rows, index, rng)?;
        out.push(Identification {
            mo: mo.id,
            index,
            score: claimed,
            identity: decode_limbs(&limbs, IDENTITY_BYTES)?,
            window: (0, n_rows - 1),
        });
    }
    Ok(out)
}

/// The GA decrypts every uploaded accumulator and checks it is an exact,
/// plausible multiple of `Token_GA`.
pub fn anti_cheat_mo_flow<R: Rng + ?Sized>(bus: &mut Bus, ga: &Ga, mo: &Mo, rng: &mut R) -> Result<Vec<(u32, u64)>> {
    if ga.token_ga().is_none() {
        return Err(Error::Usage("the GA holds no Token_GA".into()));
    }
    upload_scores(bus, ga, mo, rng)
}
