use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bit-length of every protocol quantity that enters a comparison.
pub const SHARE_BITS: u32 = 25;

/// Smallest prime above 2^27, leaving two bits of headroom over [`SHARE_BITS`]
/// for the shifted operand used by secure comparison.
pub const MODULUS: u64 = 134_217_757;

/// Number of bits needed to write any field element.
pub const FIELD_BITS: u32 = 64 - MODULUS.leading_zeros();

const _: () = assert!(MODULUS > 1 << (SHARE_BITS + 2));
const _: () = assert!(FIELD_BITS == 28);

/// An element of the prime field `Z_p` with `p = MODULUS`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    /// Reduces `value` modulo p.
    pub const fn new(value: u64) -> Self {
        Self(value % MODULUS)
    }

    /// Accepts only canonical representatives.
    pub fn try_new(value: u64) -> Option<Self> {
        (value < MODULUS).then_some(Self(value))
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen_range(0..MODULUS))
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; zero maps to zero.
    pub fn inverse(self) -> Self {
        self.pow(MODULUS - 2)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F({})", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for FieldElement {
    fn from(v: u32) -> Self {
        Self::new(v as u64)
    }
}

impl From<bool> for FieldElement {
    fn from(v: bool) -> Self {
        Self(v as u64)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        Self(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            Self(self.0 - rhs.0)
        } else {
            Self(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        // both operands are below 2^28, so the product fits in u64
        Self(self.0 * rhs.0 % MODULUS)
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        Self::ZERO - self
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_prime_trial_division(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= n {
            if n % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }

    #[test]
    fn modulus_is_smallest_prime_above_2_pow_27() {
        assert!(is_prime_trial_division(MODULUS));
        for candidate in (1u64 << 27) + 1..MODULUS {
            assert!(!is_prime_trial_division(candidate), "{candidate} is prime");
        }
    }

    #[test]
    fn arithmetic_wraps() {
        let a = FieldElement::new(MODULUS - 1);
        assert_eq!(a + FieldElement::ONE, FieldElement::ZERO);
        assert_eq!(FieldElement::ZERO - FieldElement::ONE, a);
        assert_eq!(a * a, FieldElement::ONE);
        assert_eq!(-FieldElement::ONE, a);
    }

    #[test]
    fn fermat_little_theorem() {
        for v in [1u64, 2, 12345, MODULUS - 1] {
            assert_eq!(FieldElement::new(v).pow(MODULUS - 1), FieldElement::ONE);
            let x = FieldElement::new(v);
            assert_eq!(x * x.inverse(), FieldElement::ONE);
        }
        assert_eq!(FieldElement::ZERO.pow(MODULUS - 1), FieldElement::ZERO);
    }

    #[test]
    fn try_new_rejects_non_canonical() {
        assert!(FieldElement::try_new(MODULUS).is_none());
        assert_eq!(FieldElement::try_new(7).map(FieldElement::value), Some(7));
    }
}
