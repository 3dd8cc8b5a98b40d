use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::field::{FieldElement, FIELD_BITS, MODULUS};
use super::sharing::SharedValue;
use crate::bus::{Bus, MessageClass, Payload, PartyId};
use crate::error::{Error, Result};

/// Shares of `(a, b, c = a·b)` for one secure multiplication.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub(crate) id: u64,
    pub a: SharedValue,
    pub b: SharedValue,
    pub c: SharedValue,
}

impl BeaverTriple {
    pub fn id(&self) -> u64 {
        self.id
    }
}

/// Shared bit decomposition of a uniform field element `R`, least significant bit first.
#[derive(Clone, Debug)]
pub struct RandomBitShares {
    pub(crate) id: u64,
    pub bits: Vec<SharedValue>,
}

impl RandomBitShares {
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Shares of `R = Σ 2^i · bit_i`, computed locally.
    pub fn value(&self) -> SharedValue {
        let mut acc = SharedValue::default();
        let mut weight = FieldElement::ONE;
        let two = FieldElement::new(2);
        for bit in &self.bits {
            acc = acc.add(&bit.scale(weight));
            weight = weight * two;
        }
        acc
    }
}

/// Pool of correlated randomness consumed by a session.
#[derive(Default)]
pub struct Preprocessing {
    triples: VecDeque<BeaverTriple>,
    bits: VecDeque<RandomBitShares>,
}

impl Preprocessing {
    pub fn from_parts(triples: Vec<BeaverTriple>, bits: Vec<RandomBitShares>) -> Self {
        Self {
            triples: triples.into(),
            bits: bits.into(),
        }
    }

    pub fn triples_left(&self) -> usize {
        self.triples.len()
    }

    pub fn bits_left(&self) -> usize {
        self.bits.len()
    }

    pub(crate) fn take_triples(&mut self, n: usize) -> Result<Vec<BeaverTriple>> {
        if self.triples.len() < n {
            return Err(Error::InsufficientPreprocessing {
                kind: "beaver triples",
                needed: n,
                available: self.triples.len(),
            });
        }
        Ok(self.triples.drain(..n).collect())
    }

    pub(crate) fn take_bits(&mut self, n: usize) -> Result<Vec<RandomBitShares>> {
        if self.bits.len() < n {
            return Err(Error::InsufficientPreprocessing {
                kind: "random bit decompositions",
                needed: n,
                available: self.bits.len(),
            });
        }
        Ok(self.bits.drain(..n).collect())
    }
}

/// Semi-honest offline dealer. It only ever samples fresh randomness and
/// never receives protocol inputs.
pub struct Dealer {
    rng: ChaCha20Rng,
    issued_triples: u64,
    issued_bits: u64,
}

impl Dealer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            issued_triples: 0,
            issued_bits: 0,
        }
    }

    pub fn issued_triples(&self) -> u64 {
        self.issued_triples
    }

    pub fn issued_bits(&self) -> u64 {
        self.issued_bits
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let a = FieldElement::random(&mut self.rng);
        let b = FieldElement::random(&mut self.rng);
        self.issued_triples += 1;
        BeaverTriple {
            id: self.issued_triples,
            a: SharedValue::share(a, &mut self.rng),
            b: SharedValue::share(b, &mut self.rng),
            c: SharedValue::share(a * b, &mut self.rng),
        }
    }

    pub fn random_bits(&mut self) -> RandomBitShares {
        let r = FieldElement::random(&mut self.rng).value();
        let bits = (0..FIELD_BITS)
            .map(|i| SharedValue::share(FieldElement::new((r >> i) & 1), &mut self.rng))
            .collect();
        self.issued_bits += 1;
        debug_assert!(r < MODULUS);
        RandomBitShares {
            id: self.issued_bits,
            bits,
        }
    }

    pub fn preprocess(&mut self, n_triples: usize, n_bits: usize) -> Preprocessing {
        Preprocessing {
            triples: (0..n_triples).map(|_| self.triple()).collect(),
            bits: (0..n_bits).map(|_| self.random_bits()).collect(),
        }
    }

    /// Like [`Dealer::preprocess`], additionally logging the material each
    /// party receives.
    pub fn deal(
        &mut self,
        bus: &mut Bus,
        p1: PartyId,
        p2: PartyId,
        n_triples: usize,
        n_bits: usize,
    ) -> Result<Preprocessing> {
        let pre = self.preprocess(n_triples, n_bits);
        let per_party = (3 * n_triples as u64 + n_bits as u64 * FIELD_BITS as u64) * FIELD_BITS as u64;
        for to in [p1, p2] {
            bus.send(PartyId::Dealer, to, MessageClass::DealerMaterial, Payload::Opaque { bits: per_party })?;
            // material is consumed directly from `pre`; clear the envelope
            bus.recv(to, PartyId::Dealer, MessageClass::DealerMaterial)?;
        }
        Ok(pre)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_are_multiplicative() {
        let mut dealer = Dealer::new(1);
        for _ in 0..200 {
            let t = dealer.triple();
            assert_eq!(t.c.reconstruct(), t.a.reconstruct() * t.b.reconstruct());
        }
        assert_eq!(dealer.issued_triples(), 200);
    }

    #[test]
    fn random_bits_are_bits_of_a_field_element() {
        let mut dealer = Dealer::new(2);
        for _ in 0..200 {
            let r = dealer.random_bits();
            assert_eq!(r.bits.len(), FIELD_BITS as usize);
            let mut v = 0u64;
            for (i, b) in r.bits.iter().enumerate() {
                let bit = b.reconstruct().value();
                assert!(bit <= 1);
                v |= bit << i;
            }
            assert!(v < MODULUS);
            assert_eq!(r.value().reconstruct().value(), v);
        }
    }

    #[test]
    fn exhausted_pool_reports_shortfall() {
        let mut pre = Dealer::new(3).preprocess(2, 0);
        assert!(matches!(
            pre.take_triples(3),
            Err(Error::InsufficientPreprocessing { needed: 3, available: 2, .. })
        ));
        assert!(pre.take_bits(1).is_err());
    }
}
