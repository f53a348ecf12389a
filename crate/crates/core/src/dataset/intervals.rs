use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::Result;
use crate::geo::haversine_km;

/// Per-location global-view interval vectors, max-scaled into `[0, 1]`.
///
/// Row `i` of `spatial` holds the scaled haversine distance from location
/// `i` to every location; row `i` of `temporal` holds the scaled mean trip
/// duration between `i` and every location over training trips in either
/// direction, `0` where the pair never co-occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTables {
    pub n: usize,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
    /// Largest pairwise distance in km (1 when there is nothing to scale).
    pub d_max_km: f64,
    /// Largest pairwise mean duration in hours (1 when there is nothing to scale).
    pub t_max_hours: f64,
}

impl IntervalTables {
    pub fn spatial_row(&self, loc: usize) -> &[f64] {
        &self.spatial[loc * self.n..(loc + 1) * self.n]
    }

    pub fn temporal_row(&self, loc: usize) -> &[f64] {
        &self.temporal[loc * self.n..(loc + 1) * self.n]
    }
}

pub fn build_interval_tables(train: &Corpus) -> Result<IntervalTables> {
    let n = train.n_locations();
    let mut spatial = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = haversine_km(train.locations[i].point, train.locations[j].point)?;
            spatial[i * n + j] = d;
            spatial[j * n + i] = d;
        }
    }
    let d_max = spatial.iter().copied().fold(0.0, f64::max);
    let d_max_km = if d_max > 0.0 { d_max } else { 1.0 };
    for v in &mut spatial {
        *v /= d_max_km;
    }

    let mut sum = vec![0.0; n * n];
    let mut count = vec![0u32; n * n];
    for t in train.trips.iter().flatten() {
        let h = t.duration_hours();
        sum[t.origin * n + t.dest] += h;
        count[t.origin * n + t.dest] += 1;
        if t.origin != t.dest {
            sum[t.dest * n + t.origin] += h;
            count[t.dest * n + t.origin] += 1;
        }
    }
    let mut temporal: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let t_max = temporal.iter().copied().fold(0.0, f64::max);
    let t_max_hours = if t_max > 0.0 { t_max } else { 1.0 };
    for v in &mut temporal {
        *v /= t_max_hours;
    }

    Ok(IntervalTables {
        n,
        spatial,
        temporal,
        d_max_km,
        t_max_hours,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LocationRecord, Trip};
    use crate::geo::GeoPoint;

    fn loc(id: &str, lat: f64, lon: f64) -> LocationRecord {
        LocationRecord {
            loc_id: id.into(),
            point: GeoPoint { lat, lon },
        }
    }

    #[test]
    fn two_location_toy() {
        let c = Corpus::new(
            vec![loc("a", 1.30, 103.80), loc("b", 1.35, 103.85)],
            vec!["u".into()],
            vec![vec![Trip {
                origin: 0,
                dest: 1,
                pickup_ts: 0,
                dropoff_ts: 1800,
            }]],
        )
        .unwrap();
        let t = build_interval_tables(&c).unwrap();
        assert_eq!(t.spatial_row(0), &[0.0, 1.0]);
        assert_eq!(t.spatial_row(1), &[1.0, 0.0]);
        assert_eq!(t.temporal_row(0), &[0.0, 1.0]);
        assert_eq!(t.temporal_row(1), &[1.0, 0.0]);
        assert_eq!(t.t_max_hours, 0.5);
    }

    #[test]
    fn properties_on_fixture() {
        let locs = vec![
            loc("a", 1.30, 103.80),
            loc("b", 1.35, 103.85),
            loc("c", 1.40, 103.70),
            loc("d", 1.28, 103.95),
        ];
        let trips = vec![vec![
            Trip { origin: 0, dest: 1, pickup_ts: 0, dropoff_ts: 1800 },
            Trip { origin: 1, dest: 0, pickup_ts: 5000, dropoff_ts: 8600 },
            Trip { origin: 2, dest: 2, pickup_ts: 9000, dropoff_ts: 9900 },
        ]];
        let c = Corpus::new(locs, vec!["u".into()], trips).unwrap();
        let t = build_interval_tables(&c).unwrap();
        let n = t.n;
        let max = t.spatial.iter().copied().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        for i in 0..n {
            assert_eq!(t.spatial[i * n + i], 0.0);
            for j in 0..n {
                assert_eq!(t.spatial[i * n + j], t.spatial[j * n + i]);
                assert_eq!(t.temporal[i * n + j], t.temporal[j * n + i]);
                assert!((0.0..=1.0).contains(&t.temporal[i * n + j]));
            }
        }
        // mean of 0.5 h and 1.0 h is the largest pair
        assert_eq!(t.t_max_hours, 0.75);
        assert_eq!(t.temporal[1], 1.0);
        assert_eq!(t.temporal[2 * n + 2], 0.25 / 0.75);
        assert_eq!(t.temporal[3], 0.0);
    }

    #[test]
    fn single_location_uses_unit_scale() {
        let c = Corpus::new(vec![loc("a", 1.0, 1.0)], vec![], vec![]).unwrap();
        let t = build_interval_tables(&c).unwrap();
        assert_eq!(t.d_max_km, 1.0);
        assert_eq!(t.spatial, vec![0.0]);
        assert_eq!(t.temporal, vec![0.0]);
    }
}
