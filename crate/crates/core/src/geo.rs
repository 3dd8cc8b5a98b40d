//! Coordinate projection, the plaintext contact predicate and its
//! secret-shared counterpart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sss::{FieldElement, Session, SharedValue, SHARE_BITS};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Beyond this distance from the origin the local-tangent projection is rejected.
pub const MAX_PROJECTION_M: f64 = 100_000.0;

/// Exclusive bound on cell-relative coordinates entering the secure distance,
/// chosen so that `2·(COORD_LIMIT − 1)² < 2^SHARE_BITS`.
pub const COORD_LIMIT: u32 = 1 << ((SHARE_BITS - 1) / 2);

const _: () = assert!(2 * (COORD_LIMIT as u64 - 1).pow(2) < 1 << SHARE_BITS);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::OutOfRange(format!("invalid coordinate ({lat}, {lon})")));
        }
        Ok(Self { lat, lon })
    }
}

/// Integer meters in a non-negative frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: u32,
    pub y: u32,
}

impl PlanePoint {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ContactFlag(pub bool);

impl ContactFlag {
    pub fn bit(self) -> u8 {
        self.0 as u8
    }
}

/// Equirectangular projection around `origin`, rounded to whole meters.
/// The result is signed; see [`shift_to_frame`].
pub fn project(pt: GeoPoint, origin: GeoPoint) -> Result<(i64, i64)> {
    let dlat = (pt.lat - origin.lat).to_radians();
    let dlon = (pt.lon - origin.lon).to_radians();
    let x = EARTH_RADIUS_M * dlon * origin.lat.to_radians().cos();
    let y = EARTH_RADIUS_M * dlat;
    if x.hypot(y) > MAX_PROJECTION_M {
        return Err(Error::OutOfRange(format!(
            "point {:.0} m from origin exceeds the projection validity radius",
            x.hypot(y)
        )));
    }
    Ok((x.round() as i64, y.round() as i64))
}

/// Translates signed plane coordinates by `-min` into the non-negative frame.
pub fn shift_to_frame(raw: (i64, i64), min: (i64, i64)) -> Result<PlanePoint> {
    let x = raw.0 - min.0;
    let y = raw.1 - min.1;
    if x < 0 || y < 0 || x > u32::MAX as i64 || y > u32::MAX as i64 {
        return Err(Error::OutOfRange(format!("({x}, {y}) outside the frame")));
    }
    Ok(PlanePoint::new(x as u32, y as u32))
}

pub fn squared_distance(p: PlanePoint, q: PlanePoint) -> u64 {
    let dx = p.x as i64 - q.x as i64;
    let dy = p.y as i64 - q.y as i64;
    (dx * dx + dy * dy) as u64
}

/// `Dist(p, q) < th`, strictly.
pub fn contact_plain(p: PlanePoint, q: PlanePoint, th: u32) -> ContactFlag {
    ContactFlag(squared_distance(p, q) < th as u64 * th as u64)
}

/// Shared squared distances for aligned batches of shared coordinates.
/// Consumes two triples per pair.
pub fn sec_square_dist_many(
    session: &mut Session<'_>,
    xi: &[SharedValue],
    yi: &[SharedValue],
    xj: &[SharedValue],
    yj: &[SharedValue],
) -> Result<Vec<SharedValue>> {
    let n = xi.len();
    if yi.len() != n || xj.len() != n || yj.len() != n {
        return Err(Error::Usage("coordinate batches differ in length".into()));
    }
    let mut diffs = Vec::with_capacity(2 * n);
    diffs.extend(xi.iter().zip(xj).map(|(a, b)| a.sub(b)));
    diffs.extend(yi.iter().zip(yj).map(|(a, b)| a.sub(b)));
    let squares = session.mult_many(&diffs, &diffs)?;
    Ok((0..n).map(|k| squares[k].add(&squares[n + k])).collect())
}

pub fn sec_square_dist(
    session: &mut Session<'_>,
    xi: SharedValue,
    yi: SharedValue,
    xj: SharedValue,
    yj: SharedValue,
) -> Result<SharedValue> {
    Ok(sec_square_dist_many(session, &[xi], &[yi], &[xj], &[yj])?[0])
}

/// Computes `c = 1 − [d² ≥ th²]` under sharing and opens only `c` to both parties.
pub fn sec_contact_many(
    session: &mut Session<'_>,
    d2: &[SharedValue],
    th: u32,
) -> Result<Vec<ContactFlag>> {
    let th2 = th as u64 * th as u64;
    if th2 >= 1 << SHARE_BITS {
        return Err(Error::OutOfRange(format!("th² = {th2} not below 2^{SHARE_BITS}")));
    }
    let threshold = vec![SharedValue::constant(FieldElement::new(th2)); d2.len()];
    let ge = session.comp_many(d2, &threshold)?;
    let contact: Vec<_> = ge.iter().map(|g| g.const_sub(FieldElement::ONE)).collect();
    session
        .open(&contact)?
        .into_iter()
        .map(|bit| match bit.value() {
            0 => Ok(ContactFlag(false)),
            1 => Ok(ContactFlag(true)),
            other => Err(Error::Protocol(format!("contact bit opened to {other}"))),
        })
        .collect()
}

pub fn sec_contact(session: &mut Session<'_>, d2: SharedValue, th: u32) -> Result<ContactFlag> {
    Ok(sec_contact_many(session, &[d2], th)?[0])
}
