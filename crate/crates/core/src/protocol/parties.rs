use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::bus::PartyId;
use crate::error::{Error, Result};
use crate::geo::PlanePoint;
use crate::mobility::{cell_of, CellId};
use crate::ot::IDENTITY_BYTES;
use crate::paillier::{self, Ciphertext, NoiseTable, PrivateKey, PublicKey};

/// GA-side infection statuses, one bit per user pseudonym. Statuses are
/// constant within a reporting period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfectionRegistry {
    status: Vec<bool>,
}

impl InfectionRegistry {
    pub fn new(status: Vec<bool>) -> Self {
        Self { status }
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn status_at(&self, user: u32, _t: usize) -> bool {
        self.status[user as usize]
    }
}

pub struct Ga {
    pk: PublicKey,
    sk: PrivateKey,
    registry: InfectionRegistry,
    token_ga: Option<u64>,
    noise: Option<NoiseTable>,
    score_bound: u64,
}

impl Ga {
    /// `score_bound` is the largest plausible exposure score, used when
    /// verifying operator-held accumulators.
    pub fn new(
        pk: PublicKey,
        sk: PrivateKey,
        registry: InfectionRegistry,
        token_ga: Option<u64>,
        noise: Option<NoiseTable>,
        score_bound: u64,
    ) -> Self {
        Self {
            pk,
            sk,
            registry,
            token_ga,
            noise,
            score_bound,
        }
    }

    pub fn id(&self) -> PartyId {
        PartyId::Ga
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    /// Bound on a user-masked accumulator, `Token_i < 2^32`.
    pub(crate) fn masked_bound(&self) -> BigUint {
        self.accumulator_bound() << 32
    }

    pub fn registry(&self) -> &InfectionRegistry {
        &self.registry
    }

    pub fn token_ga(&self) -> Option<u64> {
        self.token_ga
    }

    pub fn score_bound(&self) -> u64 {
        self.score_bound
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> Result<Ciphertext> {
        let m = BigUint::from(m);
        match &self.noise {
            Some(t) => t.encrypt(&m, &self.pk, rng),
            None => paillier::encrypt(&m, &self.pk, rng),
        }
    }

    /// `Enc(s_i·Token_GA)`, or `Enc(s_i)` without a token.
    pub fn encrypt_status<R: Rng + ?Sized>(&self, user: u32, t: usize, rng: &mut R) -> Result<Ciphertext> {
        let s = self.registry.status_at(user, t) as u64;
        self.encrypt(s * self.token_ga.unwrap_or(1), rng)
    }

    pub fn decrypt(&self, c: &Ciphertext) -> BigUint {
        paillier::decrypt(c, &self.sk)
    }

    /// Decryption of a value that an honest run keeps below `bound`.
    pub fn decrypt_small(&self, c: &Ciphertext, bound: &BigUint) -> BigUint {
        paillier::decrypt_small(c, &self.sk, bound)
    }

    /// Largest plaintext an honest accumulator can hold: the score bound times `Token_GA`.
    fn accumulator_bound(&self) -> BigUint {
        BigUint::from(self.score_bound) * self.token_ga.unwrap_or(1) + 1u32
    }

    /// Strips `Token_GA` from a decrypted accumulator. With a token, the
    /// plaintext must be a multiple of it and the quotient at most
    /// `bound`; anything else means an operator tampered with the sum.
    pub fn unmask(&self, plain: &BigUint, bound: &BigUint) -> Result<BigUint> {
        let Some(token) = self.token_ga else {
            return Ok(plain.clone());
        };
        let (q, r) = plain.div_rem(&BigUint::from(token));
        if !r.is_zero() {
            return Err(Error::CheatDetected(format!("accumulator is not a multiple of Token_GA (residue {r})")));
        }
        if &q > bound {
            return Err(Error::CheatDetected(format!("accumulator quotient {q} exceeds bound {bound}")));
        }
        Ok(q)
    }

    /// Decrypts an operator-held score and verifies it.
    pub fn decrypt_score(&self, c: &Ciphertext) -> Result<u64> {
        let plain = self.unmask(&self.decrypt_small(c, &self.accumulator_bound()), &BigUint::from(self.score_bound))?;
        plain
            .to_u64()
            .filter(|&s| s <= self.score_bound)
            .ok_or_else(|| Error::CheatDetected(format!("score {plain} exceeds bound {}", self.score_bound)))
    }
}

/// One row of an operator's subscriber table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserRecord {
    pub index: u32,
    pub identity: Vec<u8>,
    pub enc_score: Ciphertext,
}

/// Encrypted material handed to a user for one reveal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreAccumulator {
    pub enc_score: Ciphertext,
    pub enc_loc_scores: Vec<((CellId, usize), Ciphertext)>,
}

/// `Name||PhoneNumber`, zero padded to the fixed identity width.
pub fn identity_for(user: u32) -> Vec<u8> {
    let mut id = format!("Subscriber {user:07}||+1555{user:07}").into_bytes();
    id.resize(IDENTITY_BYTES, 0);
    id
}

pub struct Mo {
    pub(crate) id: u16,
    pub(crate) pk: PublicKey,
    pub(crate) records: Vec<UserRecord>,
    /// Global pseudonym of the subscriber in each row.
    pub(crate) users: Vec<u32>,
    row_of: HashMap<u32, usize>,
    /// `positions[t][row]`.
    pub(crate) positions: Vec<Vec<PlanePoint>>,
    /// Status ciphertexts per delivery, one vector per period or per instant.
    pub(crate) statuses: Vec<Vec<Ciphertext>>,
    noise: Option<NoiseTable>,
}

impl Mo {
    pub fn new(
        id: u16,
        pk: PublicKey,
        users: Vec<u32>,
        identities: Vec<Vec<u8>>,
        positions: Vec<Vec<PlanePoint>>,
        noise: Option<NoiseTable>,
    ) -> Result<Self> {
        if identities.len() != users.len() || positions.iter().any(|row| row.len() != users.len()) {
            return Err(Error::Usage("operator tables differ in length".into()));
        }
        if identities.iter().any(|i| i.is_empty() || i.len() > IDENTITY_BYTES) {
            return Err(Error::Usage(format!("identities must be 1..={IDENTITY_BYTES} bytes")));
        }
        let records = identities
            .into_iter()
            .enumerate()
            .map(|(index, mut identity)| {
                identity.resize(IDENTITY_BYTES, 0);
                (index, identity)
            })
            .map(|(index, identity)| UserRecord {
                index: index as u32,
                identity,
                enc_score: paillier::zero_cipher(),
            })
            .collect();
        let row_of = users.iter().enumerate().map(|(r, &u)| (u, r)).collect();
        Ok(Self {
            id,
            pk,
            records,
            users,
            row_of,
            positions,
            statuses: Vec::new(),
            noise,
        })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn party(&self) -> PartyId {
        PartyId::Mo(self.id)
    }

    pub fn records(&self) -> &[UserRecord] {
        &self.records
    }

    /// Test and harness access to the stored accumulators.
    pub fn records_mut(&mut self) -> &mut [UserRecord] {
        &mut self.records
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn row(&self, user: u32) -> Option<usize> {
        self.row_of.get(&user).copied()
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn rerandomize<R: Rng + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Ciphertext {
        match &self.noise {
            Some(t) => t.rerandomize(c, rng),
            None => paillier::rerandomize(c, &self.pk, rng),
        }
    }

    /// Latest status ciphertext of `row` delivered at or before instant `t`.
    pub(crate) fn status(&self, row: usize, t: usize) -> Option<&Ciphertext> {
        let last = self.statuses.len().checked_sub(1)?;
        self.statuses[t.min(last)].get(row)
    }

    /// Homomorphic sum of the statuses of subscribers inside `cell` at `t`,
    /// skipping `exclude`.
    pub(crate) fn sum_statuses_in(&self, cell: CellId, t: usize, l: u32, exclude: Option<u32>) -> Result<Ciphertext> {
        let row_positions = self
            .positions
            .get(t)
            .ok_or_else(|| Error::Usage(format!("instant {t} outside the operator's history")))?;
        let mut acc = paillier::zero_cipher();
        for (row, &p) in row_positions.iter().enumerate() {
            if cell_of(p, l) != cell || Some(self.users[row]) == exclude {
                continue;
            }
            let s = self
                .status(row, t)
                .ok_or_else(|| Error::Protocol(format!("MO{} holds no status for row {row}", self.id)))?;
            acc = paillier::add_cipher(&acc, s, &self.pk);
        }
        Ok(acc)
    }

    pub(crate) fn add_to_score(&mut self, row: usize, c: &Ciphertext) {
        let rec = &mut self.records[row];
        rec.enc_score = paillier::add_cipher(&rec.enc_score, c, &self.pk);
    }
}

/// A subscriber; holds nothing but its pseudonym, operator and masking tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct User {
    pub id: u32,
    pub mo: u16,
}

impl User {
    pub fn party(&self) -> PartyId {
        PartyId::User(self.id)
    }

    /// Fresh multiplicative mask in `[1, 2^32)`.
    pub fn draw_token<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(1..1u64 << 32)
    }
}
