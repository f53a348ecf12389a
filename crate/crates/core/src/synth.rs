//! Seeded generator of taxi-like trajectories with a planted,
//! origin-dependent destination rule, and the accuracy ceiling that rule
//! allows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, LocationRecord, Trip};
use crate::error::{Error, Result};
use crate::geo::{geohash_encode, GeoPoint, GeohashCell, N_TIMESLOTS};

const CELL_PRECISION: usize = 5;
const START_TS: i64 = 1_546_300_800;
const DAY: i64 = 86_400;
const SLOT_SECS: i64 = 3 * 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_locations: usize,
    pub n_clusters: usize,
    pub trips_per_user: usize,
    /// Probability that a destination is drawn uniformly instead of by rule.
    pub p_noise: f64,
    pub seed: u64,
    /// `[lat_min, lat_max, lon_min, lon_max]`.
    pub bbox: [f64; 4],
    /// Latent user types, each with its own rule.
    pub n_types: usize,
    /// Extra users with 3 to 9 trips each.
    pub n_cold_users: usize,
    /// Probability that a trip starts in the previous destination's cluster.
    pub p_stay: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_locations: 60,
            n_clusters: 6,
            trips_per_user: 30,
            p_noise: 0.1,
            seed: 0,
            bbox: [1.25, 1.45, 103.65, 103.95],
            n_types: 4,
            n_cold_users: 50,
            p_stay: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_clusters < 2 || self.n_locations < self.n_clusters {
            return bad(format!(
                "need n_locations ({}) >= n_clusters ({}) >= 2",
                self.n_locations, self.n_clusters
            ));
        }
        if self.trips_per_user < 10 {
            return bad(format!("trips_per_user {} below 10", self.trips_per_user));
        }
        if !(0.0..1.0).contains(&self.p_noise) {
            return bad(format!("p_noise {} outside [0, 1)", self.p_noise));
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return bad(format!("p_stay {} outside [0, 1]", self.p_stay));
        }
        if self.n_types == 0 || self.n_users == 0 {
            return bad("n_types and n_users must be positive".into());
        }
        let [a, b, c, d] = self.bbox;
        if !(a < b && c < d) {
            return bad(format!("empty bounding box {:?}", self.bbox));
        }
        Ok(())
    }
}

/// The ground truth behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub p_noise: f64,
    pub clusters: Vec<GeohashCell>,
    /// Cluster of each location.
    pub cluster_of: Vec<usize>,
    /// Type of each user, main cohort first, then cold users.
    pub user_types: Vec<usize>,
    /// `slot[type][origin cluster]`: departure timeslot.
    pub slot: Vec<Vec<usize>>,
    /// `dest[type][origin cluster]`: planted destination.
    pub dest: Vec<Vec<usize>>,
}

impl PlantedRule {
    /// The rule's destination for a trip; the timeslot is implied by
    /// `(type, cluster)`.
    pub fn predict(&self, user: usize, origin: usize) -> usize {
        self.dest[self.user_types[user]][self.cluster_of[origin]]
    }

    /// Structured text for oracle checks.
    pub fn manifest(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Main cohort followed by the cold-start block.
    pub corpus: Corpus,
    pub rule: PlantedRule,
    pub n_main_users: usize,
}

/// Best achievable Acc@1 under the planted rule.
pub fn oracle_accuracy(cfg: &SynthConfig) -> f64 {
    1.0 - cfg.p_noise * (1.0 - 1.0 / cfg.n_locations as f64)
}

/// Precision-5 cells whose centres fall inside the box, in scan order.
fn cells_in_box(bbox: [f64; 4]) -> Result<Vec<GeohashCell>> {
    let probe = geohash_encode(GeoPoint::new(bbox[0], bbox[2])?, CELL_PRECISION)?;
    let (a, b, c, d) = probe.bounds();
    let (dlat, dlon) = (b - a, d - c);
    let mut cells: Vec<GeohashCell> = Vec::new();
    let mut lat = bbox[0] + dlat / 2.0;
    while lat < bbox[1] {
        let mut lon = bbox[2] + dlon / 2.0;
        while lon < bbox[3] {
            let cell = geohash_encode(GeoPoint::new(lat, lon)?, CELL_PRECISION)?;
            let (a, b, c, d) = cell.bounds();
            let inside = a >= bbox[0] && b <= bbox[1] && c >= bbox[2] && d <= bbox[3];
            if inside && !cells.contains(&cell) {
                cells.push(cell);
            }
            lon += dlon;
        }
        lat += dlat;
    }
    Ok(cells)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut cells = cells_in_box(cfg.bbox)?;
    if cells.len() < cfg.n_clusters {
        return Err(Error::Config(format!(
            "bounding box holds {} precision-{CELL_PRECISION} cells, {} clusters requested",
            cells.len(),
            cfg.n_clusters
        )));
    }
    cells.shuffle(&mut rng);
    cells.truncate(cfg.n_clusters);

    let cluster_of: Vec<usize> = (0..cfg.n_locations).map(|i| i % cfg.n_clusters).collect();
    let mut members = vec![Vec::new(); cfg.n_clusters];
    let mut locations = Vec::with_capacity(cfg.n_locations);
    for (i, &c) in cluster_of.iter().enumerate() {
        let (a, b, lo, hi) = cells[c].bounds();
        // Keep to the middle of the cell so rounding never crosses an edge.
        let lat = a + (b - a) * rng.gen_range(0.2..0.8);
        let lon = lo + (hi - lo) * rng.gen_range(0.2..0.8);
        members[c].push(i);
        locations.push(LocationRecord {
            loc_id: format!("l{i:03}"),
            point: GeoPoint::new(lat, lon)?,
        });
    }

    let slot: Vec<Vec<usize>> = (0..cfg.n_types)
        .map(|_| (0..cfg.n_clusters).map(|_| rng.gen_range(0..N_TIMESLOTS)).collect())
        .collect();
    let dest: Vec<Vec<usize>> = (0..cfg.n_types)
        .map(|_| loop {
            let row: Vec<usize> = (0..cfg.n_clusters).map(|_| rng.gen_range(0..cfg.n_locations)).collect();
            // A row constant over clusters would make the origin irrelevant.
            if row.iter().any(|&d| d != row[0]) {
                break row;
            }
        })
        .collect();

    let n_total = cfg.n_users + cfg.n_cold_users;
    let user_types: Vec<usize> = (0..n_total).map(|_| rng.gen_range(0..cfg.n_types)).collect();
    let mut users = Vec::with_capacity(n_total);
    let mut trips = Vec::with_capacity(n_total);
    for (u, &ty) in user_types.iter().enumerate() {
        let (name, n_trips) = if u < cfg.n_users {
            (format!("u{u:04}"), cfg.trips_per_user)
        } else {
            (format!("c{:04}", u - cfg.n_users), rng.gen_range(3..=9))
        };
        let mut seq = Vec::with_capacity(n_trips);
        let mut prev_cluster: Option<usize> = None;
        for k in 0..n_trips {
            let c = match prev_cluster {
                Some(p) if rng.gen_bool(cfg.p_stay) => p,
                _ => rng.gen_range(0..cfg.n_clusters),
            };
            let origin = *members[c].choose(&mut rng).unwrap();
            let pickup = START_TS + k as i64 * DAY + slot[ty][c] as i64 * SLOT_SECS + rng.gen_range(0..SLOT_SECS - 3600);
            let dropoff = pickup + rng.gen_range(5 * 60..=60 * 60);
            let d = if rng.gen_bool(cfg.p_noise) {
                rng.gen_range(0..cfg.n_locations)
            } else {
                dest[ty][c]
            };
            seq.push(Trip {
                origin,
                dest: d,
                pickup_ts: pickup,
                dropoff_ts: dropoff,
            });
            prev_cluster = Some(cluster_of[d]);
        }
        users.push(name);
        trips.push(seq);
    }

    Ok(SynthOutput {
        corpus: Corpus::new(locations, users, trips)?,
        rule: PlantedRule {
            p_noise: cfg.p_noise,
            clusters: cells,
            cluster_of,
            user_types,
            slot,
            dest,
        },
        n_main_users: cfg.n_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::preprocess;
    use crate::geo::timeslot_of;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 40,
            n_locations: 20,
            n_clusters: 4,
            trips_per_user: 12,
            n_cold_users: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn clusters_occupy_distinct_cells() {
        let out = generate(&small()).unwrap();
        for (l, &c) in out.corpus.locations.iter().zip(&out.rule.cluster_of) {
            assert_eq!(geohash_encode(l.point, 5).unwrap(), out.rule.clusters[c]);
        }
        let mut cells = out.rule.clusters.clone();
        cells.dedup();
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn noiseless_destinations_follow_the_rule() {
        let cfg = SynthConfig { p_noise: 0.0, ..small() };
        let out = generate(&cfg).unwrap();
        for (u, seq) in out.corpus.trips.iter().enumerate() {
            let ty = out.rule.user_types[u];
            for t in seq {
                let c = out.rule.cluster_of[t.origin];
                assert_eq!(t.dest, out.rule.predict(u, t.origin));
                assert_eq!(timeslot_of(t.pickup_ts).index(), out.rule.slot[ty][c]);
                let minutes = (t.dropoff_ts - t.pickup_ts) / 60;
                assert!((5..=60).contains(&minutes));
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(generate(&small()).unwrap().corpus, generate(&other).unwrap().corpus);
    }

    #[test]
    fn rule_depends_on_origin() {
        let out = generate(&small()).unwrap();
        for row in &out.rule.dest {
            assert!(row.iter().any(|&d| d != row[0]));
        }
    }

    #[test]
    fn tiny_box_is_a_config_error() {
        let cfg = SynthConfig {
            bbox: [1.30, 1.31, 103.80, 103.81],
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn main_cohort_survives_preprocessing() {
        let cfg = SynthConfig {
            n_cold_users: 0,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        let p = preprocess(&out.corpus, 10, 10);
        assert_eq!(p.corpus, out.corpus);
    }

    #[test]
    fn cold_block_has_short_histories() {
        let out = generate(&SynthConfig::default()).unwrap();
        let cold = &out.corpus.trips[out.n_main_users..];
        assert_eq!(cold.len(), 50);
        assert!(cold.iter().all(|t| (3..=9).contains(&t.len())));
        let p = preprocess(&out.corpus, 10, 10);
        assert_eq!(p.corpus.n_users(), 200);
    }

    #[test]
    fn oracle_ceiling() {
        assert_eq!(oracle_accuracy(&SynthConfig { p_noise: 0.0, ..small() }), 1.0);
        let c = SynthConfig {
            p_noise: 0.2,
            n_locations: 60,
            ..small()
        };
        assert!((oracle_accuracy(&c) - 0.80333).abs() < 1e-4);
        assert!((oracle_accuracy(&SynthConfig::default()) - 0.901_667).abs() < 1e-6);
    }

    #[test]
    fn rule_predictor_reaches_the_ceiling() {
        let cfg = SynthConfig {
            n_users: 400,
            trips_per_user: 25,
            n_cold_users: 0,
            p_noise: 0.2,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        let (mut hits, mut n) = (0, 0);
        for (u, seq) in out.corpus.trips.iter().enumerate() {
            for t in seq {
                hits += (out.rule.predict(u, t.origin) == t.dest) as usize;
                n += 1;
            }
        }
        assert_eq!(n, 10_000);
        assert!((hits as f64 / n as f64 - oracle_accuracy(&cfg)).abs() < 0.03);
    }
}
