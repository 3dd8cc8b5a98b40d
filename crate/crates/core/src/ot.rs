//! Oblivious table lookup over secret shares.
//!
//! The result is `Σ_j [attr_j = x] · value_j`, evaluated under sharing, so the
//! table holder learns nothing about which row matched.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field_sss::{FieldElement, Party, Session, SharedValue, EQ_TRIPLES};

/// Width of one value limb; strictly below the comparison bit-length.
pub const LIMB_BITS: u32 = 24;
const LIMB_BYTES: usize = (LIMB_BITS / 8) as usize;

/// Fixed width of an identity string (`Name||PhoneNumber`, zero padded).
pub const IDENTITY_BYTES: usize = 64;

pub const fn limbs_for_bytes(n_bytes: usize) -> usize {
    n_bytes.div_ceil(LIMB_BYTES)
}

/// Big-endian split into 24-bit limbs, left-padded with zeros to `width` limbs.
pub fn encode_limbs(bytes: &[u8], width: usize) -> Result<Vec<FieldElement>> {
    let needed = limbs_for_bytes(bytes.len());
    if needed > width {
        return Err(Error::OutOfRange(format!(
            "{} bytes need {needed} limbs, width is {width}",
            bytes.len()
        )));
    }
    let mut padded = vec![0u8; width * LIMB_BYTES - bytes.len()];
    padded.extend_from_slice(bytes);
    Ok(padded
        .chunks_exact(LIMB_BYTES)
        .map(|c| FieldElement::new(u64::from(c[0]) << 16 | u64::from(c[1]) << 8 | u64::from(c[2])))
        .collect())
}

/// Inverse of [`encode_limbs`], keeping the trailing `n_bytes` bytes.
pub fn decode_limbs(limbs: &[FieldElement], n_bytes: usize) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(limbs.len() * LIMB_BYTES);
    for limb in limbs {
        let v = limb.value();
        if v >= 1 << LIMB_BITS {
            return Err(Error::OutOfRange(format!("limb {v} exceeds {LIMB_BITS} bits")));
        }
        bytes.extend_from_slice(&[(v >> 16) as u8, (v >> 8) as u8, v as u8]);
    }
    if n_bytes > bytes.len() {
        return Err(Error::OutOfRange("decoded value shorter than requested".into()));
    }
    let cut = bytes.len() - n_bytes;
    if bytes[..cut].iter().any(|&b| b != 0) {
        return Err(Error::OutOfRange("nonzero padding in decoded limbs".into()));
    }
    Ok(bytes.split_off(cut))
}

/// Plaintext row as held by the table owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub attribute: u64,
    pub value: Vec<FieldElement>,
}

#[derive(Clone, Debug)]
pub struct SharedTable {
    pub rows: Vec<(SharedValue, Vec<SharedValue>)>,
    pub value_width: usize,
}

impl SharedTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Rejects duplicate attributes and ragged value widths.
pub fn validate_rows(rows: &[TableRow]) -> Result<usize> {
    let width = rows.first().map_or(0, |r| r.value.len());
    let mut seen = HashSet::with_capacity(rows.len());
    for row in rows {
        if row.value.len() != width {
            return Err(Error::Usage("table rows differ in value width".into()));
        }
        if !seen.insert(row.attribute) {
            return Err(Error::Usage(format!("duplicate attribute {}", row.attribute)));
        }
    }
    Ok(width)
}

/// The owner shares every row with fresh randomness and hands the counterpart its shares.
pub fn share_table<R: Rng + ?Sized>(
    session: &mut Session<'_>,
    owner: Party,
    rows: &[TableRow],
    rng: &mut R,
) -> Result<SharedTable> {
    let width = validate_rows(rows)?;
    let mut flat = Vec::with_capacity(rows.len() * (1 + width));
    for row in rows {
        flat.push(FieldElement::new(row.attribute));
        flat.extend_from_slice(&row.value);
    }
    let shared = session.share_inputs(owner, &flat, rng)?;
    let rows = shared
        .chunks_exact(1 + width)
        .map(|c| (c[0], c[1..].to_vec()))
        .collect();
    Ok(SharedTable {
        rows,
        value_width: width,
    })
}

/// Triples needed to look up among `rows` rows of `width` limbs.
pub const fn lookup_triples(rows: usize, width: usize) -> usize {
    rows * (EQ_TRIPLES + width)
}

pub fn ot_lookup(
    session: &mut Session<'_>,
    table: &SharedTable,
    attr_x: SharedValue,
) -> Result<Vec<SharedValue>> {
    if table.is_empty() {
        return Ok(Vec::new());
    }
    ot_lookup_window(session, table, attr_x, 0, table.len() - 1)
}

/// Lookup restricted to the public row range `[lo, hi]`.
pub fn ot_lookup_window(
    session: &mut Session<'_>,
    table: &SharedTable,
    attr_x: SharedValue,
    lo: usize,
    hi: usize,
) -> Result<Vec<SharedValue>> {
    if lo > hi || hi >= table.len() {
        return Err(Error::Usage(format!(
            "window [{lo}, {hi}] outside table of {} rows",
            table.len()
        )));
    }
    let rows = &table.rows[lo..=hi];
    let width = table.value_width;
    let attrs: Vec<_> = rows.iter().map(|(a, _)| *a).collect();
    let query = vec![attr_x; rows.len()];
    let hits = session.eq_many(&attrs, &query)?;

    let mut lhs = Vec::with_capacity(rows.len() * width);
    let mut rhs = Vec::with_capacity(rows.len() * width);
    for ((_, value), hit) in rows.iter().zip(&hits) {
        for v in value {
            lhs.push(*hit);
            rhs.push(*v);
        }
    }
    let products = session.mult_many(&lhs, &rhs)?;
    let mut out = vec![SharedValue::default(); width];
    for chunk in products.chunks_exact(width.max(1)) {
        for (acc, p) in out.iter_mut().zip(chunk) {
            *acc = acc.add(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{Bus, PartyId};
    use crate::field_sss::Dealer;
    use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashMap;

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v)
    }

    fn rows(pairs: &[(u64, u64)]) -> Vec<TableRow> {
        pairs
            .iter()
            .map(|&(a, v)| TableRow {
                attribute: a,
                value: vec![fe(v)],
            })
            .collect()
    }

    fn lookup(table_rows: &[TableRow], query: u64, window: Option<(usize, usize)>, seed: u64) -> Vec<u64> {
        let width = table_rows.first().map_or(0, |r| r.value.len());
        let mut bus = Bus::new();
        let mut pre = Dealer::new(seed).preprocess(lookup_triples(table_rows.len(), width), 0);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut s = Session::new(&mut bus, PartyId::Ga, PartyId::Mo(0), &mut pre);
        let table = share_table(&mut s, Party::P2, table_rows, &mut rng).unwrap();
        let x = s.share_inputs(Party::P1, &[fe(query)], &mut rng).unwrap()[0];
        let out = match window {
            None => ot_lookup(&mut s, &table, x).unwrap(),
            Some((lo, hi)) => ot_lookup_window(&mut s, &table, x, lo, hi).unwrap(),
        };
        out.iter().map(|v| v.reconstruct().value()).collect()
    }

    #[test]
    fn single_row() {
        assert_eq!(lookup(&rows(&[(7, 99)]), 7, None, 1), vec![99]);
    }

    #[test]
    fn absent_attribute_returns_zero() {
        assert_eq!(lookup(&rows(&[(1, 10), (2, 20), (3, 30)]), 5, None, 2), vec![0]);
    }

    #[test]
    fn windows() {
        let t = rows(&[(0, 10), (1, 11), (2, 12), (3, 13), (4, 14), (5, 15), (6, 16)]);
        assert_eq!(lookup(&t, 3, Some((3, 3)), 3), vec![13]);
        assert_eq!(lookup(&t, 3, Some((1, 5)), 4), vec![13]);
        assert_eq!(lookup(&t, 3, Some((4, 6)), 5), vec![0]);
    }

    #[test]
    fn bad_window_is_usage_error() {
        let t = rows(&[(0, 1), (1, 2)]);
        let mut bus = Bus::new();
        let mut pre = Dealer::new(6).preprocess(100, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut s = Session::new(&mut bus, PartyId::Ga, PartyId::Mo(0), &mut pre);
        let table = share_table(&mut s, Party::P2, &t, &mut rng).unwrap();
        let x = SharedValue::constant(fe(0));
        assert!(ot_lookup_window(&mut s, &table, x, 1, 0).is_err());
        assert!(ot_lookup_window(&mut s, &table, x, 0, 2).is_err());
    }

    #[test]
    fn duplicate_attributes_rejected() {
        assert!(validate_rows(&rows(&[(1, 1), (1, 2)])).is_err());
        let mut ragged = rows(&[(1, 1), (2, 2)]);
        ragged[1].value.push(fe(0));
        assert!(validate_rows(&ragged).is_err());
    }

    #[test]
    fn random_tables_match_hash_map() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for trial in 0..5u64 {
            let n = rng.gen_range(1..=20);
            let attrs = rand::seq::index::sample(&mut rng, 1000, n);
            let t: Vec<TableRow> = attrs
                .iter()
                .map(|a| TableRow {
                    attribute: a as u64,
                    value: vec![fe(rng.gen_range(1..1 << 24)), fe(rng.gen_range(0..1 << 24))],
                })
                .collect();
            let oracle: HashMap<u64, Vec<u64>> = t
                .iter()
                .map(|r| (r.attribute, r.value.iter().map(|v| v.value()).collect()))
                .collect();
            for q in 0..20u64 {
                let query = if q % 2 == 0 {
                    t[rng.gen_range(0..n)].attribute
                } else {
                    rng.gen_range(0..1000)
                };
                let expected = oracle.get(&query).cloned().unwrap_or(vec![0, 0]);
                assert_eq!(lookup(&t, query, None, trial * 100 + q), expected);
            }
        }
    }

    #[test]
    fn identity_limbs_round_trip() {
        let mut id = b"Ada Lovelace||+441234567890".to_vec();
        id.resize(IDENTITY_BYTES, 0);
        let width = limbs_for_bytes(IDENTITY_BYTES);
        assert_eq!(width, 22);
        let limbs = encode_limbs(&id, width).unwrap();
        assert!(limbs.iter().all(|l| l.value() < 1 << LIMB_BITS));
        assert_eq!(decode_limbs(&limbs, IDENTITY_BYTES).unwrap(), id);
        assert!(encode_limbs(&id, width - 1).is_err());
    }

    #[test]
    fn sender_transcript_shape_is_row_independent() {
        let t = rows(&[(0, 5), (1, 6), (2, 7), (3, 8)]);
        let shapes: Vec<Vec<(PartyId, PartyId, u64)>> = (0..4u64)
            .map(|q| {
                let mut bus = Bus::new();
                let mut pre = Dealer::new(8).preprocess(lookup_triples(4, 1), 0);
                let mut rng = ChaCha20Rng::seed_from_u64(q);
                let mut s = Session::new(&mut bus, PartyId::Ga, PartyId::Mo(0), &mut pre);
                let table = share_table(&mut s, Party::P2, &t, &mut rng).unwrap();
                let x = s.share_inputs(Party::P1, &[fe(q)], &mut rng).unwrap()[0];
                ot_lookup(&mut s, &table, x).unwrap();
                bus.log()
                    .iter()
                    .map(|e| (e.sender, e.receiver, e.payload_bits))
                    .collect()
            })
            .collect();
        assert!(shapes.windows(2).all(|w| w[0] == w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn vector_lookup_is_elementwise(a in 0u64..50, b in 0u64..50, c in 0u64..50, q in 0u64..4) {
            let t = vec![
                TableRow { attribute: 0, value: vec![fe(a), fe(b)] },
                TableRow { attribute: 1, value: vec![fe(b), fe(c)] },
                TableRow { attribute: 2, value: vec![fe(c), fe(a)] },
            ];
            let whole = lookup(&t, q, None, q);
            let first: Vec<TableRow> = t.iter().map(|r| TableRow { attribute: r.attribute, value: vec![r.value[0]] }).collect();
            let second: Vec<TableRow> = t.iter().map(|r| TableRow { attribute: r.attribute, value: vec![r.value[1]] }).collect();
            prop_assert_eq!(whole, vec![lookup(&first, q, None, q)[0], lookup(&second, q, None, q)[0]]);
        }
    }
}
