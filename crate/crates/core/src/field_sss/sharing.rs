//! (2,2) Shamir sharing over degree-1 polynomials evaluated at x = 1 and x = 2.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::FieldElement;
use crate::error::{Error, Result};

/// One of the two computing parties of a sharing instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    P1,
    P2,
}

impl Party {
    pub const fn eval_point(self) -> u8 {
        match self {
            Party::P1 => 1,
            Party::P2 => 2,
        }
    }
}

/// A point `f(eval_point)` of a sharing polynomial `f(x) = s + r·x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    pub party: Party,
    pub value: FieldElement,
}

impl Share {
    pub const fn eval_point(&self) -> u8 {
        self.party.eval_point()
    }
}

/// Splits `secret` with a fresh uniform blinding coefficient.
pub fn share<R: Rng + ?Sized>(secret: FieldElement, rng: &mut R) -> (Share, Share) {
    share_with_blinding(secret, FieldElement::random(rng))
}

pub fn share_with_blinding(secret: FieldElement, r: FieldElement) -> (Share, Share) {
    (
        Share {
            party: Party::P1,
            value: secret + r,
        },
        Share {
            party: Party::P2,
            value: secret + r + r,
        },
    )
}

/// Interpolates `f(0) = 2·f(1) − f(2)`.
pub fn reconstruct(s1: Share, s2: Share) -> Result<FieldElement> {
    if s1.party != Party::P1 || s2.party != Party::P2 {
        return Err(Error::Usage(format!(
            "reconstruct expects eval points (1, 2), got ({}, {})",
            s1.eval_point(),
            s2.eval_point()
        )));
    }
    Ok(s1.value + s1.value - s2.value)
}

pub fn add_local(x: Share, y: Share) -> Result<Share> {
    if x.party != y.party {
        return Err(Error::PartyMismatch {
            expected: x.party,
            found: y.party,
        });
    }
    Ok(Share {
        party: x.party,
        value: x.value + y.value,
    })
}

pub fn scalar_mul_local(x: Share, k: FieldElement) -> Share {
    Share {
        party: x.party,
        value: x.value * k,
    }
}

/// Both parties add `k`; since the constant polynomial `k` has the same value
/// at every point, the shared secret shifts by `k`.
pub fn add_const(x: Share, k: FieldElement) -> Share {
    Share {
        party: x.party,
        value: x.value + k,
    }
}

/// Both parties' shares of one secret, as held by an in-process simulation.
///
/// Protocol code never reconstructs a `SharedValue` except at the points where
/// the corresponding shares are exchanged over the bus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SharedValue {
    pub(crate) p1: FieldElement,
    pub(crate) p2: FieldElement,
}

impl SharedValue {
    pub fn share<R: Rng + ?Sized>(secret: FieldElement, rng: &mut R) -> Self {
        let (a, b) = share(secret, rng);
        Self {
            p1: a.value,
            p2: b.value,
        }
    }

    /// Public constant, shared with zero blinding.
    pub const fn constant(k: FieldElement) -> Self {
        Self { p1: k, p2: k }
    }

    pub fn from_shares(s1: Share, s2: Share) -> Result<Self> {
        if s1.party != Party::P1 || s2.party != Party::P2 {
            return Err(Error::Usage("shares must be (P1, P2)".into()));
        }
        Ok(Self {
            p1: s1.value,
            p2: s2.value,
        })
    }

    pub fn shares(&self) -> (Share, Share) {
        (self.share_of(Party::P1), self.share_of(Party::P2))
    }

    pub fn share_of(&self, party: Party) -> Share {
        let value = match party {
            Party::P1 => self.p1,
            Party::P2 => self.p2,
        };
        Share { party, value }
    }

    pub fn reconstruct(&self) -> FieldElement {
        self.p1 + self.p1 - self.p2
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            p1: self.p1 + o.p1,
            p2: self.p2 + o.p2,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            p1: self.p1 - o.p1,
            p2: self.p2 - o.p2,
        }
    }

    pub fn scale(&self, k: FieldElement) -> Self {
        Self {
            p1: self.p1 * k,
            p2: self.p2 * k,
        }
    }

    pub fn add_const(&self, k: FieldElement) -> Self {
        Self {
            p1: self.p1 + k,
            p2: self.p2 + k,
        }
    }

    /// `k − self`.
    pub fn const_sub(&self, k: FieldElement) -> Self {
        Self {
            p1: k - self.p1,
            p2: k - self.p2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sss::field::MODULUS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v)
    }

    #[test]
    fn zero_secret_zero_blinding() {
        let (a, b) = share_with_blinding(fe(0), fe(0));
        assert_eq!((a.value.value(), b.value.value()), (0, 0));
        assert_eq!(reconstruct(a, b).unwrap(), fe(0));
    }

    #[test]
    fn hand_evaluated_sharing() {
        let (a, b) = share_with_blinding(fe(5), fe(3));
        assert_eq!((a.value.value(), b.value.value()), (8, 11));
        assert_eq!(reconstruct(a, b).unwrap(), fe(5));
    }

    #[test]
    fn pure_blinding_encodes_zero() {
        let s1 = Share { party: Party::P1, value: fe(1) };
        let s2 = Share { party: Party::P2, value: fe(2) };
        assert_eq!(reconstruct(s1, s2).unwrap(), fe(0));
    }

    #[test]
    fn mismatched_eval_points_rejected() {
        let (a, b) = share_with_blinding(fe(5), fe(3));
        assert!(matches!(reconstruct(b, a), Err(Error::Usage(_))));
        assert!(matches!(reconstruct(a, a), Err(Error::Usage(_))));
    }

    #[test]
    fn round_trip_random_secrets() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let s = FieldElement::random(&mut rng);
            let (a, b) = share(s, &mut rng);
            assert_eq!(reconstruct(a, b).unwrap(), s);
        }
    }

    #[test]
    fn linear_operations() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let (x1, x2) = share(fe(2), &mut rng);
        let (y1, y2) = share(fe(3), &mut rng);
        let sum = reconstruct(add_local(x1, y1).unwrap(), add_local(x2, y2).unwrap()).unwrap();
        assert_eq!(sum, fe(5));

        let (z1, z2) = share(fe(7), &mut rng);
        let k = fe(0);
        assert_eq!(
            reconstruct(scalar_mul_local(z1, k), scalar_mul_local(z2, k)).unwrap(),
            fe(0)
        );

        let (w1, w2) = share(fe(4), &mut rng);
        let k = fe(MODULUS - 1);
        assert_eq!(reconstruct(add_const(w1, k), add_const(w2, k)).unwrap(), fe(3));
    }

    #[test]
    fn add_local_party_mismatch() {
        let (a, b) = share_with_blinding(fe(1), fe(1));
        assert!(matches!(add_local(a, b), Err(Error::PartyMismatch { .. })));
    }

    #[test]
    fn single_share_is_uniform() {
        // chi-square over 16 buckets of the P1 share of a fixed secret
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let buckets = 16usize;
        let trials = 32_000usize;
        let mut counts = vec![0usize; buckets];
        for _ in 0..trials {
            let (a, _) = share(fe(42), &mut rng);
            counts[(a.value.value() * buckets as u64 / MODULUS) as usize] += 1;
        }
        let expected = trials as f64 / buckets as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 15 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }
}
