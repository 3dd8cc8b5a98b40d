//! Interactive subprotocols between the two share holders: Beaver
//! multiplication, Fermat-test equality and bit-extraction comparison.

use super::dealer::{BeaverTriple, Preprocessing};
use super::field::{FieldElement, FIELD_BITS, MODULUS, SHARE_BITS};
use super::sharing::{Party, SharedValue};
use rand::Rng;

use crate::bus::{Bus, MessageClass, Payload, PartyId, ShareTag};
use crate::error::{Error, Result};

/// Triples consumed by one equality test: 27 squarings plus one
/// multiplication per set bit of `p − 1` below its leading bit.
pub const EQ_TRIPLES: usize = (FIELD_BITS as usize - 1) + ((MODULUS - 1).count_ones() as usize - 1);

/// Triples consumed by one comparison: the wrap-detection scan over all field
/// bits, two borrow scans over the low `SHARE_BITS` bits (the first step of
/// each scan is linear), two XORs and one selection.
pub const COMP_TRIPLES: usize = (FIELD_BITS as usize - 1) + 2 * (SHARE_BITS as usize - 1) + 3;

/// Random bit decompositions consumed by one comparison.
pub const COMP_BITS: usize = 1;

/// A two-party computation session bound to one pair of bus endpoints.
pub struct Session<'a> {
    bus: &'a mut Bus,
    p1: PartyId,
    p2: PartyId,
    pre: &'a mut Preprocessing,
    last_triple: Option<u64>,
    transcript: Option<Vec<FieldElement>>,
    range_checks: bool,
}

impl<'a> Session<'a> {
    pub fn new(bus: &'a mut Bus, p1: PartyId, p2: PartyId, pre: &'a mut Preprocessing) -> Self {
        Self {
            bus,
            p1,
            p2,
            pre,
            last_triple: None,
            transcript: None,
            range_checks: cfg!(debug_assertions),
        }
    }

    /// Keeps every value opened by multiplication and comparison maskings.
    pub fn record_transcript(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn with_range_checks(mut self, on: bool) -> Self {
        self.range_checks = on;
        self
    }

    pub fn transcript(&self) -> &[FieldElement] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    pub fn endpoint(&self, party: Party) -> PartyId {
        match party {
            Party::P1 => self.p1,
            Party::P2 => self.p2,
        }
    }

    pub fn bus(&mut self) -> &mut Bus {
        self.bus
    }

    /// `owner` secret-shares its private inputs and sends the counterpart's
    /// evaluation points over the bus as one tagged batch.
    pub fn share_inputs<R: Rng + ?Sized>(
        &mut self,
        owner: Party,
        secrets: &[FieldElement],
        rng: &mut R,
    ) -> Result<Vec<SharedValue>> {
        let shared: Vec<_> = secrets.iter().map(|&s| SharedValue::share(s, rng)).collect();
        if shared.is_empty() {
            return Ok(shared);
        }
        let (from, to, other) = match owner {
            Party::P1 => (self.p1, self.p2, Party::P2),
            Party::P2 => (self.p2, self.p1, Party::P1),
        };
        let tag = ShareTag {
            batch: self.bus.fresh_batch(),
            owner: from,
            eval_point: other.eval_point(),
        };
        let sent: Vec<_> = shared.iter().map(|v| v.share_of(other).value).collect();
        self.bus
            .send_tagged(from, to, MessageClass::InputShare, Payload::Field(sent), Some(tag))?;
        let received = self.bus.recv(to, from, MessageClass::InputShare)?.into_field()?;
        Ok(shared
            .iter()
            .zip(received)
            .map(|(v, theirs)| match owner {
                Party::P1 => SharedValue { p1: v.p1, p2: theirs },
                Party::P2 => SharedValue { p1: theirs, p2: v.p2 },
            })
            .collect())
    }

    /// Both parties send their shares to each other; returns the shares as
    /// received (P1's shares seen by P2, P2's shares seen by P1).
    fn exchange(
        &mut self,
        class: MessageClass,
        values: &[SharedValue],
    ) -> Result<(Vec<FieldElement>, Vec<FieldElement>)> {
        let from_p1: Vec<_> = values.iter().map(|v| v.p1).collect();
        let from_p2: Vec<_> = values.iter().map(|v| v.p2).collect();
        self.bus.send(self.p1, self.p2, class, Payload::Field(from_p1))?;
        self.bus.send(self.p2, self.p1, class, Payload::Field(from_p2))?;
        let seen_by_p2 = self.bus.recv(self.p2, self.p1, class)?.into_field()?;
        let seen_by_p1 = self.bus.recv(self.p1, self.p2, class)?.into_field()?;
        if seen_by_p1.len() != values.len() || seen_by_p2.len() != values.len() {
            return Err(Error::Protocol("opening length mismatch".into()));
        }
        Ok((seen_by_p2, seen_by_p1))
    }

    fn open_with(&mut self, class: MessageClass, values: &[SharedValue]) -> Result<Vec<FieldElement>> {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        let (s1, s2) = self.exchange(class, values)?;
        let opened: Vec<_> = s1.iter().zip(&s2).map(|(&a, &b)| a + a - b).collect();
        if let Some(t) = self.transcript.as_mut() {
            if class == MessageClass::MaskedOpening {
                t.extend_from_slice(&opened);
            }
        }
        Ok(opened)
    }

    /// Opens designated outputs to both parties.
    pub fn open(&mut self, values: &[SharedValue]) -> Result<Vec<FieldElement>> {
        self.open_with(MessageClass::OutputOpening, values)
    }

    /// Opens outputs to `receiver` only: the other party sends its shares.
    pub fn open_to(&mut self, receiver: Party, values: &[SharedValue]) -> Result<Vec<FieldElement>> {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        let (from, to) = match receiver {
            Party::P1 => (self.p2, self.p1),
            Party::P2 => (self.p1, self.p2),
        };
        let sent: Vec<_> = values
            .iter()
            .map(|v| if receiver == Party::P1 { v.p2 } else { v.p1 })
            .collect();
        self.bus.send(from, to, MessageClass::OutputOpening, Payload::Field(sent))?;
        let got = self.bus.recv(to, from, MessageClass::OutputOpening)?.into_field()?;
        Ok(values
            .iter()
            .zip(got)
            .map(|(v, other)| match receiver {
                Party::P1 => v.p1 + v.p1 - other,
                Party::P2 => other + other - v.p2,
            })
            .collect())
    }

    fn take_triples(&mut self, n: usize) -> Result<Vec<BeaverTriple>> {
        let triples = self.pre.take_triples(n)?;
        for t in &triples {
            if self.last_triple.is_some_and(|last| t.id <= last) {
                return Err(Error::TripleReuse(t.id));
            }
            self.last_triple = Some(t.id);
        }
        Ok(triples)
    }

    /// Element-wise products, one Beaver triple and one opening round for the batch.
    pub fn mult_many(&mut self, xs: &[SharedValue], ys: &[SharedValue]) -> Result<Vec<SharedValue>> {
        if xs.len() != ys.len() {
            return Err(Error::Usage("mult operands differ in length".into()));
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let triples = self.take_triples(xs.len())?;
        let mut masked = Vec::with_capacity(2 * xs.len());
        for ((x, y), t) in xs.iter().zip(ys).zip(&triples) {
            masked.push(x.sub(&t.a));
            masked.push(y.sub(&t.b));
        }
        let opened = self.open_with(MessageClass::MaskedOpening, &masked)?;
        Ok(triples
            .iter()
            .zip(opened.chunks_exact(2))
            .map(|(t, de)| {
                let (d, e) = (de[0], de[1]);
                t.c.add(&t.b.scale(d)).add(&t.a.scale(e)).add_const(d * e)
            })
            .collect())
    }

    pub fn mult(&mut self, x: SharedValue, y: SharedValue) -> Result<SharedValue> {
        Ok(self.mult_many(&[x], &[y])?[0])
    }

    /// Shares of `[x = y]` via `1 − (x − y)^(p−1)`.
    pub fn eq_many(&mut self, xs: &[SharedValue], ys: &[SharedValue]) -> Result<Vec<SharedValue>> {
        if xs.len() != ys.len() {
            return Err(Error::Usage("eq operands differ in length".into()));
        }
        if self.pre.triples_left() < EQ_TRIPLES * xs.len() {
            return Err(Error::InsufficientPreprocessing {
                kind: "beaver triples",
                needed: EQ_TRIPLES * xs.len(),
                available: self.pre.triples_left(),
            });
        }
        let z: Vec<_> = xs.iter().zip(ys).map(|(x, y)| x.sub(y)).collect();
        let exp = MODULUS - 1;
        let mut acc = z.clone();
        for bit in (0..FIELD_BITS - 1).rev() {
            acc = self.mult_many(&acc, &acc)?;
            if (exp >> bit) & 1 == 1 {
                acc = self.mult_many(&acc, &z)?;
            }
        }
        Ok(acc.iter().map(|a| a.const_sub(FieldElement::ONE)).collect())
    }

    pub fn eq(&mut self, x: SharedValue, y: SharedValue) -> Result<SharedValue> {
        Ok(self.eq_many(&[x], &[y])?[0])
    }

    fn check_range(&self, values: &[SharedValue]) -> Result<()> {
        if !self.range_checks {
            return Ok(());
        }
        let bound = 1u64 << SHARE_BITS;
        for v in values {
            let plain = v.reconstruct().value();
            if plain >= bound {
                return Err(Error::OutOfRange(format!(
                    "comparison operand {plain} not below 2^{SHARE_BITS}"
                )));
            }
        }
        Ok(())
    }

    /// Shares of `[x ≥ y]` for operands in `[0, 2^SHARE_BITS)`.
    ///
    /// `w = x − y + 2^b` lies in `[1, 2^(b+1))` and its bit `b` is the answer.
    /// The parties open `c = w + R mod p` for a dealer-supplied uniform `R`
    /// with shared bits. Then `w = c − R + p·[c < R]` over the integers, so bit
    /// `b` of `w` is bit `b` of either `c − R` or `c + p − R`, each obtained as
    /// `a_b ⊕ r_b ⊕ borrow_b` from a borrow scan against the shared bits of `R`.
    pub fn comp_many(&mut self, xs: &[SharedValue], ys: &[SharedValue]) -> Result<Vec<SharedValue>> {
        if xs.len() != ys.len() {
            return Err(Error::Usage("comp operands differ in length".into()));
        }
        let n = xs.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        self.check_range(xs)?;
        self.check_range(ys)?;
        if self.pre.triples_left() < COMP_TRIPLES * n {
            return Err(Error::InsufficientPreprocessing {
                kind: "beaver triples",
                needed: COMP_TRIPLES * n,
                available: self.pre.triples_left(),
            });
        }
        let rbits = self.pre.take_bits(n * COMP_BITS)?;
        let b = SHARE_BITS as usize;
        let l = FIELD_BITS as usize;
        let shift = FieldElement::new(1 << SHARE_BITS);

        let masked: Vec<_> = xs
            .iter()
            .zip(ys)
            .zip(&rbits)
            .map(|((x, y), r)| x.sub(y).add_const(shift).add(&r.value()))
            .collect();
        let c: Vec<u64> = self
            .open_with(MessageClass::MaskedOpening, &masked)?
            .into_iter()
            .map(FieldElement::value)
            .collect();
        let c_wrapped: Vec<u64> = c.iter().map(|&v| v + MODULUS).collect();

        // lt ← [A mod 2^(i+1) < R mod 2^(i+1)]; a_i = 0 gives r_i ∨ lt, a_i = 1 gives r_i ∧ lt
        let first = |a: u64, r: &SharedValue| {
            if a & 1 == 0 {
                *r
            } else {
                SharedValue::default()
            }
        };
        let mut wrap: Vec<_> = (0..n).map(|k| first(c[k], &rbits[k].bits[0])).collect();
        let mut borrow0: Vec<_> = (0..n).map(|k| first(c[k], &rbits[k].bits[0])).collect();
        let mut borrow1: Vec<_> = (0..n).map(|k| first(c_wrapped[k], &rbits[k].bits[0])).collect();

        let update = |lt: &SharedValue, r: &SharedValue, prod: &SharedValue, a_bit: u64| {
            if a_bit == 0 {
                lt.add(r).sub(prod)
            } else {
                *prod
            }
        };

        for i in 1..l {
            let with_borrow = i < b;
            let mut lhs = Vec::with_capacity(3 * n);
            let mut rhs = Vec::with_capacity(3 * n);
            for k in 0..n {
                let r = rbits[k].bits[i];
                lhs.push(wrap[k]);
                rhs.push(r);
                if with_borrow {
                    lhs.push(borrow0[k]);
                    rhs.push(r);
                    lhs.push(borrow1[k]);
                    rhs.push(r);
                }
            }
            let prods = self.mult_many(&lhs, &rhs)?;
            let stride = if with_borrow { 3 } else { 1 };
            for k in 0..n {
                let r = rbits[k].bits[i];
                let p = &prods[stride * k..stride * (k + 1)];
                wrap[k] = update(&wrap[k], &r, &p[0], (c[k] >> i) & 1);
                if with_borrow {
                    borrow0[k] = update(&borrow0[k], &r, &p[1], (c[k] >> i) & 1);
                    borrow1[k] = update(&borrow1[k], &r, &p[2], (c_wrapped[k] >> i) & 1);
                }
            }
        }

        // bit b of A − R is a_b ⊕ r_b ⊕ borrow_b
        let xor_public = |a_bit: u64, r: &SharedValue| {
            if a_bit == 0 {
                *r
            } else {
                r.const_sub(FieldElement::ONE)
            }
        };
        let mut lhs = Vec::with_capacity(2 * n);
        let mut rhs = Vec::with_capacity(2 * n);
        let mut us = Vec::with_capacity(2 * n);
        for k in 0..n {
            let r_b = rbits[k].bits[b];
            let u0 = xor_public((c[k] >> b) & 1, &r_b);
            let u1 = xor_public((c_wrapped[k] >> b) & 1, &r_b);
            lhs.extend([u0, u1]);
            rhs.extend([borrow0[k], borrow1[k]]);
            us.extend([u0, u1]);
        }
        let prods = self.mult_many(&lhs, &rhs)?;
        let two = FieldElement::new(2);
        let bit_of = |j: usize| us[j].add(&rhs[j]).sub(&prods[j].scale(two));
        let t0: Vec<_> = (0..n).map(|k| bit_of(2 * k)).collect();
        let t1: Vec<_> = (0..n).map(|k| bit_of(2 * k + 1)).collect();

        let diff: Vec<_> = t1.iter().zip(&t0).map(|(a, b)| a.sub(b)).collect();
        let sel = self.mult_many(&wrap, &diff)?;
        Ok(t0.iter().zip(&sel).map(|(a, s)| a.add(s)).collect())
    }

    pub fn comp(&mut self, x: SharedValue, y: SharedValue) -> Result<SharedValue> {
        Ok(self.comp_many(&[x], &[y])?[0])
    }
}
