//! Geospatial primitives: great-circle distance, geohash cells and
//! three-hour timeslots.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Number of timeslots in a day.
pub const N_TIMESLOTS: usize = 8;

const SLOT_SECONDS: i64 = 3 * 3600;
const DAY_SECONDS: i64 = 24 * 3600;

const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate ({}, {})",
                self.lat, self.lon
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidInput(format!(
                "coordinate out of range ({}, {})",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Great-circle distance in kilometers.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// A base-32 geohash cell of fixed precision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GeohashCell(String);

impl GeohashCell {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }

    /// Bounding box `(lat_min, lat_max, lon_min, lon_max)` of the cell.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (mut lat, mut lon) = ((-90.0, 90.0), (-180.0, 180.0));
        let mut even = true;
        for c in self.0.bytes() {
            let idx = BASE32.iter().position(|&b| b == c).unwrap_or(0);
            for shift in (0..5).rev() {
                let bit = (idx >> shift) & 1 == 1;
                let range: &mut (f64, f64) = if even { &mut lon } else { &mut lat };
                let mid = (range.0 + range.1) / 2.0;
                if bit {
                    range.0 = mid;
                } else {
                    range.1 = mid;
                }
                even = !even;
            }
        }
        (lat.0, lat.1, lon.0, lon.1)
    }
}

impl fmt::Display for GeohashCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Standard interleaved-bit geohash, longitude bit first.
pub fn geohash_encode(p: GeoPoint, precision: usize) -> Result<GeohashCell> {
    if !(1..=12).contains(&precision) {
        return Err(Error::InvalidInput(format!(
            "geohash precision {precision} outside [1, 12]"
        )));
    }
    p.validate()?;
    let (mut lat, mut lon) = ((-90.0f64, 90.0f64), (-180.0f64, 180.0f64));
    let mut code = String::with_capacity(precision);
    let mut even = true;
    while code.len() < precision {
        let mut idx = 0usize;
        for _ in 0..5 {
            let (range, v) = if even { (&mut lon, p.lon) } else { (&mut lat, p.lat) };
            let mid = (range.0 + range.1) / 2.0;
            idx <<= 1;
            if v >= mid {
                idx |= 1;
                range.0 = mid;
            } else {
                range.1 = mid;
            }
            even = !even;
        }
        code.push(BASE32[idx] as char);
    }
    Ok(GeohashCell(code))
}

/// One of eight three-hour bins of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timeslot(u8);

impl Timeslot {
    pub fn new(index: usize) -> Result<Self> {
        if index >= N_TIMESLOTS {
            return Err(Error::InvalidInput(format!("timeslot {index} out of range")));
        }
        Ok(Timeslot(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Timeslot of a UTC epoch timestamp.
pub fn timeslot_of(ts: i64) -> Timeslot {
    timeslot_with_offset(ts, 0)
}

/// Timeslot after shifting the timestamp by a fixed UTC offset.
pub fn timeslot_with_offset(ts: i64, utc_offset_secs: i64) -> Timeslot {
    let sec_of_day = (ts + utc_offset_secs).rem_euclid(DAY_SECONDS);
    Timeslot((sec_of_day / SLOT_SECONDS) as u8)
}

/// Fractional-second variant; rejects non-finite input.
pub fn timeslot_of_f64(ts: f64) -> Result<Timeslot> {
    if !ts.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite timestamp {ts}")));
    }
    Ok(timeslot_of(ts.floor() as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn law_of_cosines(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_KM * c.acos()
    }

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(haversine_km(pt(1.3, 103.8), pt(1.3, 103.8)).unwrap(), 0.0);
    }

    #[test]
    fn quarter_great_circle() {
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 90.0)).unwrap();
        let expected = std::f64::consts::FRAC_PI_2 * EARTH_RADIUS_KM;
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 10007.54).abs() < 0.01);
    }

    #[test]
    fn matches_law_of_cosines() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = pt(rng.gen_range(-80.0..80.0), rng.gen_range(-179.0..179.0));
            let b = pt(rng.gen_range(-80.0..80.0), rng.gen_range(-179.0..179.0));
            let h = haversine_km(a, b).unwrap();
            let c = law_of_cosines(a, b);
            assert!((h - c).abs() <= 1e-6 * c.max(1e-9), "{h} vs {c}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let bad = GeoPoint { lat: f64::NAN, lon: 0.0 };
        assert!(haversine_km(bad, pt(0.0, 0.0)).is_err());
        assert!(geohash_encode(bad, 5).is_err());
        assert!(timeslot_of_f64(f64::INFINITY).is_err());
    }

    #[test]
    fn geohash_vectors() {
        assert_eq!(geohash_encode(pt(57.64911, 10.40744), 11).unwrap().as_str(), "u4pruydqqvj");
        assert_eq!(geohash_encode(pt(0.0001, 0.0001), 1).unwrap().as_str(), "s");
        assert!(geohash_encode(pt(0.0, 0.0), 0).is_err());
        assert!(geohash_encode(pt(0.0, 0.0), 13).is_err());
    }

    #[test]
    fn nearby_points_share_precision5_cell() {
        // ~1 m apart, well inside one cell
        let a = pt(1.30000, 103.80000);
        let b = pt(1.30000, 103.80001);
        let (ca, cb) = (geohash_encode(a, 5).unwrap(), geohash_encode(b, 5).unwrap());
        assert_eq!(ca, cb);
        let (la0, la1, lo0, lo1) = ca.bounds();
        assert!(la0 <= a.lat && a.lat <= la1 && lo0 <= a.lon && a.lon <= lo1);
    }

    #[test]
    fn timeslots() {
        assert_eq!(timeslot_of(30 * 60).index(), 0);
        assert_eq!(timeslot_of(12 * 3600).index(), 4);
        assert_eq!(timeslot_of(23 * 3600 + 59 * 60).index(), 7);
        assert_eq!(timeslot_of(-60).index(), 7);
        for h in 0..24 {
            assert_eq!(timeslot_of(86400 * 100 + h * 3600 + 1799).index(), (h / 3) as usize);
        }
        assert_eq!(timeslot_with_offset(23 * 3600, 8 * 3600).index(), 2);
    }

    proptest! {
        #[test]
        fn haversine_symmetric(a in -90.0f64..90.0, b in -180.0f64..180.0, c in -90.0f64..90.0, d in -180.0f64..180.0) {
            let (p, q) = (pt(a, b), pt(c, d));
            prop_assert_eq!(haversine_km(p, q).unwrap(), haversine_km(q, p).unwrap());
            prop_assert!(haversine_km(p, q).unwrap() >= 0.0);
        }

        #[test]
        fn haversine_triangle(a in -89.0f64..89.0, b in -179.0f64..179.0,
                              c in -89.0f64..89.0, d in -179.0f64..179.0,
                              e in -89.0f64..89.0, f in -179.0f64..179.0) {
            let (p, q, r) = (pt(a, b), pt(c, d), pt(e, f));
            let pr = haversine_km(p, r).unwrap();
            let pq = haversine_km(p, q).unwrap();
            let qr = haversine_km(q, r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-9);
        }

        #[test]
        fn geohash_prefix(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0, p in 1usize..12) {
            let short = geohash_encode(pt(lat, lon), p).unwrap();
            let long = geohash_encode(pt(lat, lon), p + 1).unwrap();
            prop_assert!(long.as_str().starts_with(short.as_str()));
            prop_assert_eq!(long.precision(), p + 1);
        }
    }
}
