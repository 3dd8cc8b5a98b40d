//! Paillier encryption with `g = n + 1`.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Key size used by the test and desk profiles.
pub const TEST_KEY_BITS: usize = 1024;
/// Modulus size whose ciphertexts (mod n²) are 4096 bits long.
pub const PAPER_KEY_BITS: usize = 2048;

const MAX_PRIME_ATTEMPTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub n: BigUint,
    pub g: BigUint,
    pub n_squared: BigUint,
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Self {
        Self {
            g: &n + 1u32,
            n_squared: &n * &n,
            n,
        }
    }

    pub fn key_bits(&self) -> u64 {
        self.n.bits()
    }

    /// Fixed serialized width of a ciphertext, `⌈bits(n²)/8⌉`.
    pub fn cipher_bytes(&self) -> usize {
        self.n_squared.bits().div_ceil(8) as usize
    }

    pub fn cipher_bits(&self) -> u64 {
        8 * self.cipher_bytes() as u64
    }

    fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `(1 + m·n)·noise mod n²`; `g^m = 1 + m·n` for `g = n + 1`.
    fn with_noise(&self, m: &BigUint, noise: &BigUint) -> BigUint {
        let gm = (m * &self.n + 1u32) % &self.n_squared;
        gm * noise % &self.n_squared
    }
}

#[derive(Clone, Debug)]
pub struct PrivateKey {
    pub lambda: BigUint,
    pub mu: BigUint,
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    p_minus_1: BigUint,
    q_minus_1: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    n: BigUint,
    n_squared: BigUint,
}

impl PrivateKey {
    fn new(p: BigUint, q: BigUint, pk: &PublicKey) -> Result<Self> {
        let one = BigUint::one();
        let p1 = &p - &one;
        let q1 = &q - &one;
        let lambda = p1.lcm(&q1);
        let l_value = l_function(&pk.g.modpow(&lambda, &pk.n_squared), &pk.n);
        let mu = l_value
            .modinv(&pk.n)
            .ok_or_else(|| Error::Protocol("L(g^λ) not invertible mod n".into()))?;
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let hp = l_function(&pk.g.modpow(&p1, &p_squared), &p)
            .modinv(&p)
            .ok_or_else(|| Error::Protocol("hp not invertible".into()))?;
        let hq = l_function(&pk.g.modpow(&q1, &q_squared), &q)
            .modinv(&q)
            .ok_or_else(|| Error::Protocol("hq not invertible".into()))?;
        let q_inv_p = q
            .modinv(&p)
            .ok_or_else(|| Error::Protocol("q not invertible mod p".into()))?;
        Ok(Self {
            lambda,
            mu,
            p,
            q,
            p_squared,
            q_squared,
            p_minus_1: p1,
            q_minus_1: q1,
            hp,
            hq,
            q_inv_p,
            n: pk.n.clone(),
            n_squared: pk.n_squared.clone(),
        })
    }
}

/// `L(x) = (x − 1) / d`.
fn l_function(x: &BigUint, d: &BigUint) -> BigUint {
    (x - 1u32) / d
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext(pub(crate) BigUint);

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn from_value(value: BigUint, pk: &PublicKey) -> Result<Self> {
        if value >= pk.n_squared {
            return Err(Error::OutOfRange("ciphertext not below n²".into()));
        }
        Ok(Self(value))
    }

    /// Big-endian, left-padded to [`PublicKey::cipher_bytes`].
    pub fn to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        let raw = self.0.to_bytes_be();
        let width = pk.cipher_bytes();
        let mut out = vec![0u8; width.saturating_sub(raw.len())];
        out.extend_from_slice(&raw);
        out
    }

    pub fn from_bytes(bytes: &[u8], pk: &PublicKey) -> Result<Self> {
        if bytes.len() != pk.cipher_bytes() {
            return Err(Error::OutOfRange(format!(
                "ciphertext encoding is {} bytes, expected {}",
                bytes.len(),
                pk.cipher_bytes()
            )));
        }
        Self::from_value(BigUint::from_bytes_be(bytes), pk)
    }
}

pub fn keygen<R: Rng + ?Sized>(key_bits: usize, rng: &mut R) -> Result<(PublicKey, PrivateKey)> {
    if key_bits < 256 || key_bits % 2 != 0 {
        return Err(Error::Usage(format!("unsupported key size {key_bits}")));
    }
    let half = key_bits / 2;
    for _ in 0..MAX_PRIME_ATTEMPTS {
        let p = glass_pumpkin::prime::from_rng(half, rng)
            .map_err(|_| Error::PrimeGeneration(MAX_PRIME_ATTEMPTS))?;
        let q = glass_pumpkin::prime::from_rng(half, rng)
            .map_err(|_| Error::PrimeGeneration(MAX_PRIME_ATTEMPTS))?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != key_bits as u64 {
            continue;
        }
        let pk = PublicKey::from_modulus(n);
        let sk = PrivateKey::new(p, q, &pk)?;
        return Ok((pk, sk));
    }
    Err(Error::PrimeGeneration(MAX_PRIME_ATTEMPTS))
}

fn check_plaintext(m: &BigUint, pk: &PublicKey) -> Result<()> {
    if m >= &pk.n {
        return Err(Error::OutOfRange("plaintext not below n".into()));
    }
    Ok(())
}

pub fn encrypt<R: Rng + ?Sized>(m: &BigUint, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
    check_plaintext(m, pk)?;
    let noise = pk.random_unit(rng).modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext(pk.with_noise(m, &noise)))
}

pub fn encrypt_u64<R: Rng + ?Sized>(m: u64, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
    encrypt(&BigUint::from(m), pk, rng)
}

fn decrypt_mod_p(c: &Ciphertext, sk: &PrivateKey) -> BigUint {
    l_function(&c.0.modpow(&sk.p_minus_1, &sk.p_squared), &sk.p) * &sk.hp % &sk.p
}

/// Decryption through the CRT decomposition mod p² and q².
pub fn decrypt(c: &Ciphertext, sk: &PrivateKey) -> BigUint {
    let mp = decrypt_mod_p(c, sk);
    let mq = l_function(&c.0.modpow(&sk.q_minus_1, &sk.q_squared), &sk.q) * &sk.hq % &sk.q;
    // m = mq + q·((mp − mq)·q⁻¹ mod p)
    let diff = (&mp + &sk.p - (&mq % &sk.p)) % &sk.p;
    let h = diff * &sk.q_inv_p % &sk.p;
    (mq + h * &sk.q) % &sk.n
}

/// Decryption of a plaintext expected below `bound`. When `bound ≤ p` the
/// residue mod `p` already is the plaintext, so only one half-size
/// exponentiation is needed; results at or above `bound` fall back to the
/// full CRT route.
pub fn decrypt_small(c: &Ciphertext, sk: &PrivateKey, bound: &BigUint) -> BigUint {
    if bound <= &sk.p {
        let mp = decrypt_mod_p(c, sk);
        if &mp < bound {
            return mp;
        }
    }
    decrypt(c, sk)
}

/// Textbook decryption `L(c^λ mod n²)·μ mod n`.
pub fn decrypt_with_lambda(c: &Ciphertext, sk: &PrivateKey) -> BigUint {
    l_function(&c.0.modpow(&sk.lambda, &sk.n_squared), &sk.n) * &sk.mu % &sk.n
}

pub fn add_cipher(c1: &Ciphertext, c2: &Ciphertext, pk: &PublicKey) -> Ciphertext {
    Ciphertext(&c1.0 * &c2.0 % &pk.n_squared)
}

pub fn scalar_mul(c: &Ciphertext, k: &BigUint, pk: &PublicKey) -> Result<Ciphertext> {
    check_plaintext(k, pk)?;
    Ok(Ciphertext(c.0.modpow(k, &pk.n_squared)))
}

/// `Enc(m + 0)`: multiplies in a fresh encryption of zero.
pub fn rerandomize<R: Rng + ?Sized>(c: &Ciphertext, pk: &PublicKey, rng: &mut R) -> Ciphertext {
    let noise = pk.random_unit(rng).modpow(&pk.n, &pk.n_squared);
    Ciphertext(&c.0 * noise % &pk.n_squared)
}

/// Neutral element of ciphertext addition, a noiseless encryption of zero.
pub fn zero_cipher() -> Ciphertext {
    Ciphertext(BigUint::one())
}

/// Fixed-base source of encryption noise.
///
/// Noise values are `H^α mod n²` for a per-key `H = h^n` and a fresh
/// `exponent_bits`-bit `α`. A windowed table of powers of `H` turns each draw
/// into `exponent_bits / 8` modular multiplications instead of a full
/// exponentiation. The table is only meaningful for the key it was built for.
pub struct NoiseTable {
    n_squared: BigUint,
    exponent_bits: u64,
    windows: Vec<Vec<BigUint>>,
}

const WINDOW_BITS: u64 = 8;

impl NoiseTable {
    pub fn new<R: Rng + ?Sized>(pk: &PublicKey, exponent_bits: u64, rng: &mut R) -> Self {
        let h = pk.random_unit(rng);
        let mut base = h.modpow(&pk.n, &pk.n_squared);
        let n_windows = exponent_bits.div_ceil(WINDOW_BITS);
        let mut windows = Vec::with_capacity(n_windows as usize);
        for _ in 0..n_windows {
            let mut row = Vec::with_capacity((1 << WINDOW_BITS) - 1);
            let mut acc = base.clone();
            row.push(acc.clone());
            for _ in 2..(1u32 << WINDOW_BITS) {
                acc = &acc * &base % &pk.n_squared;
                row.push(acc.clone());
            }
            // next window base is base^(2^w)
            base = &acc * &base % &pk.n_squared;
            windows.push(row);
        }
        Self {
            n_squared: pk.n_squared.clone(),
            exponent_bits,
            windows,
        }
    }

    pub fn exponent_bits(&self) -> u64 {
        self.exponent_bits
    }

    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        let alpha = rng.gen_biguint(self.exponent_bits);
        let digits = alpha.to_bytes_le();
        let mut acc = BigUint::one();
        for (row, &digit) in self.windows.iter().zip(&digits) {
            if digit != 0 {
                acc = acc * &row[digit as usize - 1] % &self.n_squared;
            }
        }
        acc
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
        check_plaintext(m, pk)?;
        Ok(Ciphertext(pk.with_noise(m, &self.noise(rng))))
    }

    pub fn rerandomize<R: Rng + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Ciphertext {
        Ciphertext(&c.0 * self.noise(rng) % &self.n_squared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use num_traits::Zero;
    use std::sync::OnceLock;

    fn keys() -> &'static (PublicKey, PrivateKey) {
        static KEYS: OnceLock<(PublicKey, PrivateKey)> = OnceLock::new();
        KEYS.get_or_init(|| keygen(TEST_KEY_BITS, &mut ChaCha20Rng::seed_from_u64(7)).unwrap())
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn small_decryption_agrees_with_crt() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let bound = big(1) << 80;
        for _ in 0..200 {
            let m = rng.gen_biguint_below(&bound);
            let c = encrypt(&m, pk, &mut rng).unwrap();
            assert_eq!(decrypt_small(&c, sk, &bound), m);
        }
        // a plaintext beyond the bound still decrypts exactly
        let m = &pk.n - 5u32;
        let c = encrypt(&m, pk, &mut rng).unwrap();
        assert_eq!(decrypt_small(&c, sk, &bound), m);
        // a bound above p disables the shortcut
        let c = encrypt(&big(9), pk, &mut rng).unwrap();
        assert_eq!(decrypt_small(&c, sk, &pk.n), big(9));
    }

    #[test]
    fn key_shape() {
        let (pk, sk) = keys();
        assert_eq!(pk.key_bits(), TEST_KEY_BITS as u64);
        assert_eq!(pk.g, &pk.n + 1u32);
        assert_eq!(pk.cipher_bytes(), 256);
        assert!(!sk.lambda.is_zero());
    }

    #[test]
    fn boundary_round_trips() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let top = &pk.n - 1u32;
        for m in [BigUint::zero(), top] {
            let c = encrypt(&m, pk, &mut rng).unwrap();
            assert_eq!(decrypt(&c, sk), m);
            assert_eq!(decrypt_with_lambda(&c, sk), m);
        }
    }

    #[test]
    fn plaintext_out_of_range() {
        let (pk, _) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(matches!(encrypt(&pk.n, pk, &mut rng), Err(Error::OutOfRange(_))));
        let c = encrypt_u64(1, pk, &mut rng).unwrap();
        assert!(scalar_mul(&c, &pk.n, pk).is_err());
    }

    #[test]
    fn encryption_is_probabilistic() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = encrypt_u64(1, pk, &mut rng).unwrap();
        let b = encrypt_u64(1, pk, &mut rng).unwrap();
        assert_ne!(a, b);
        assert_eq!(decrypt(&a, sk), decrypt(&b, sk));
    }

    #[test]
    fn homomorphic_examples() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let e = |m| encrypt_u64(m, pk, &mut ChaCha20Rng::seed_from_u64(m + 100)).unwrap();
        assert_eq!(decrypt(&add_cipher(&e(0), &e(9), pk), sk), big(9));
        assert_eq!(decrypt(&add_cipher(&e(2), &e(3), pk), sk), big(5));
        assert_eq!(decrypt(&scalar_mul(&e(11), &big(1), pk).unwrap(), sk), big(11));
        assert_eq!(decrypt(&scalar_mul(&e(7), &big(6), pk).unwrap(), sk), big(42));
        assert_eq!(decrypt(&scalar_mul(&e(7), &big(0), pk).unwrap(), sk), big(0));

        let bits: Vec<u64> = (0..180).map(|_| rng.gen_range(0..2)).collect();
        let folded = bits.iter().fold(zero_cipher(), |acc, &b| {
            add_cipher(&acc, &encrypt_u64(b, pk, &mut rng).unwrap(), pk)
        });
        assert_eq!(decrypt(&folded, sk), big(bits.iter().sum()));
    }

    #[test]
    fn rerandomization() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let c = encrypt_u64(1, pk, &mut rng).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut cur = c.clone();
        for _ in 0..10 {
            cur = rerandomize(&cur, pk, &mut rng);
            assert_eq!(decrypt(&cur, sk), big(1));
            seen.insert(cur.clone());
        }
        assert_eq!(seen.len(), 10);
        assert!(!seen.contains(&c));
        let z = rerandomize(&encrypt_u64(0, pk, &mut rng).unwrap(), pk, &mut rng);
        assert_eq!(decrypt(&z, sk), big(0));
    }

    #[test]
    fn noise_table_paths_agree_with_plaintexts() {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let table = NoiseTable::new(pk, 256, &mut rng);
        let a = table.encrypt(&big(17), pk, &mut rng).unwrap();
        let b = table.rerandomize(&a, &mut rng);
        assert_ne!(a, b);
        assert_eq!(decrypt(&a, sk), big(17));
        assert_eq!(decrypt(&b, sk), big(17));
        assert_eq!(decrypt(&add_cipher(&a, &b, pk), sk), big(34));
    }

    #[test]
    fn fixed_width_serialization() {
        let (pk, _) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let c = encrypt_u64(3, pk, &mut rng).unwrap();
        let bytes = c.to_bytes(pk);
        assert_eq!(bytes.len(), pk.cipher_bytes());
        assert_eq!(Ciphertext::from_bytes(&bytes, pk).unwrap(), c);
        assert!(Ciphertext::from_bytes(&bytes[1..], pk).is_err());
        let small = Ciphertext(BigUint::one());
        assert_eq!(small.to_bytes(pk).len(), pk.cipher_bytes());
    }

    #[test]
    fn different_seeds_different_moduli() {
        let a = keygen(512, &mut ChaCha20Rng::seed_from_u64(1)).unwrap().0;
        let b = keygen(512, &mut ChaCha20Rng::seed_from_u64(2)).unwrap().0;
        assert_ne!(a.n, b.n);
        assert!(keygen(100, &mut ChaCha20Rng::seed_from_u64(1)).is_err());
    }
}
