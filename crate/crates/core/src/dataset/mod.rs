//! Trip corpora: loading, filtering, chronological splitting, vocabulary
//! and the global-view interval tables.

mod intervals;
pub(crate) mod io;
mod preprocess;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint, GeohashCell, Timeslot, N_TIMESLOTS};

pub use intervals::{build_interval_tables, IntervalTables};
pub use io::{load_corpus, read_locations, read_raw_trips, write_corpus, write_locations, write_trips, RawTrip};
pub use preprocess::{preprocess, Preprocessed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub loc_id: String,
    pub point: GeoPoint,
}

/// One origin to destination trip. Location fields index the corpus
/// location table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub origin: usize,
    pub dest: usize,
    pub pickup_ts: i64,
    pub dropoff_ts: i64,
}

impl Trip {
    pub fn duration_hours(&self) -> f64 {
        (self.dropoff_ts - self.pickup_ts) as f64 / 3600.0
    }
}

/// Users, locations and each user's time-ordered trips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub locations: Vec<LocationRecord>,
    pub users: Vec<String>,
    /// Parallel to `users`.
    pub trips: Vec<Vec<Trip>>,
}

impl Corpus {
    /// Builds a corpus, sorting each user's trips chronologically. The sort
    /// is stable so equal timestamps keep their input order.
    pub fn new(
        locations: Vec<LocationRecord>,
        users: Vec<String>,
        mut trips: Vec<Vec<Trip>>,
    ) -> Result<Self> {
        if users.len() != trips.len() {
            return Err(Error::Contract(format!(
                "{} users but {} trip sequences",
                users.len(),
                trips.len()
            )));
        }
        let n = locations.len();
        for seq in &mut trips {
            for t in seq.iter() {
                if t.origin >= n || t.dest >= n {
                    return Err(Error::Contract(format!(
                        "trip references location {} but only {n} exist",
                        t.origin.max(t.dest)
                    )));
                }
                if t.dropoff_ts < t.pickup_ts {
                    return Err(Error::InvalidInput(format!(
                        "dropoff {} precedes pickup {}",
                        t.dropoff_ts, t.pickup_ts
                    )));
                }
            }
            seq.sort_by_key(|t| (t.pickup_ts, t.dropoff_ts));
        }
        Ok(Corpus {
            locations,
            users,
            trips,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_trips(&self) -> usize {
        self.trips.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_trips() == 0
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user_id)
    }

    pub fn location_index(&self, loc_id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.loc_id == loc_id)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut origins = vec![false; self.n_locations()];
        let mut dests = vec![false; self.n_locations()];
        for t in self.trips.iter().flatten() {
            origins[t.origin] = true;
            dests[t.dest] = true;
        }
        CorpusStats {
            users: self.trips.iter().filter(|s| !s.is_empty()).count(),
            locations: self.n_locations(),
            origins: origins.iter().filter(|&&b| b).count(),
            destinations: dests.iter().filter(|&&b| b).count(),
            trips: self.n_trips(),
        }
    }
}

/// Dataset summary in the usual users/locations/origins/destinations/trips
/// column set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub locations: usize,
    pub origins: usize,
    pub destinations: usize,
    pub trips: usize,
}

/// Output of [`chronological_split`]. Both corpora share the user and
/// location tables of the input.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub test: Corpus,
    /// Users that ended up with an empty test partition.
    pub flagged: Vec<usize>,
}

/// Per user, the first `ceil(train_ratio * n)` trips go to train and the
/// rest to test.
pub fn chronological_split(c: &Corpus, train_ratio: f64) -> Result<Split> {
    if !(train_ratio > 0.0 && train_ratio <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "train ratio {train_ratio} outside (0, 1]"
        )));
    }
    let mut train = Vec::with_capacity(c.n_users());
    let mut test = Vec::with_capacity(c.n_users());
    let mut flagged = Vec::new();
    for (u, seq) in c.trips.iter().enumerate() {
        let n = seq.len();
        let n_train = if n < 2 {
            n
        } else {
            // 1e-9 absorbs products such as 0.7 * 30 = 21.000000000000004
            ((train_ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
        };
        if n_train == n {
            flagged.push(u);
        }
        train.push(seq[..n_train].to_vec());
        test.push(seq[n_train..].to_vec());
    }
    Ok(Split {
        train: Corpus {
            locations: c.locations.clone(),
            users: c.users.clone(),
            trips: train,
        },
        test: Corpus {
            locations: c.locations.clone(),
            users: c.users.clone(),
            trips: test,
        },
        flagged,
    })
}

/// Which end of a trip a visit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Origin,
    Destination,
}

/// A location visit: pick-up time for origins, drop-off time for
/// destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub loc: usize,
    pub ts: i64,
}

impl Visit {
    pub fn origin_of(t: &Trip) -> Self {
        Visit {
            loc: t.origin,
            ts: t.pickup_ts,
        }
    }

    pub fn dest_of(t: &Trip) -> Self {
        Visit {
            loc: t.dest,
            ts: t.dropoff_ts,
        }
    }
}

/// Splits a trip sequence into the origin sequence `o_2..o_n` and the
/// destination sequence `d_1..d_{n-1}`. Fewer than two trips yields two
/// empty sequences.
pub fn build_encoder_sequences(trips: &[Trip]) -> (Vec<Visit>, Vec<Visit>) {
    if trips.len() < 2 {
        return (Vec::new(), Vec::new());
    }
    let origins = trips[1..].iter().map(Visit::origin_of).collect();
    let dests = trips[..trips.len() - 1].iter().map(Visit::dest_of).collect();
    (origins, dests)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub user: usize,
    pub origin: usize,
    pub prev_dest: usize,
    pub target: usize,
}

/// One example per consecutive trip pair: `(o_j, d_{j-1}) -> d_j`.
pub fn build_training_examples(user: usize, trips: &[Trip]) -> Vec<TrainingExample> {
    trips
        .windows(2)
        .map(|w| TrainingExample {
            user,
            origin: w[1].origin,
            prev_dest: w[0].dest,
            target: w[1].dest,
        })
        .collect()
}

/// Index spaces for the embedding tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub n_locations: usize,
    pub n_users: usize,
    pub geohash_precision: usize,
    /// Distinct cells, sorted.
    pub geohashes: Vec<GeohashCell>,
    /// Location index to index into `geohashes`.
    pub loc_geohash: Vec<usize>,
    pub utc_offset_secs: i64,
}

impl Vocab {
    pub fn build(c: &Corpus, geohash_precision: usize, utc_offset_secs: i64) -> Result<Self> {
        let cells = c
            .locations
            .iter()
            .map(|l| geo::geohash_encode(l.point, geohash_precision))
            .collect::<Result<Vec<_>>>()?;
        let mut geohashes = cells.clone();
        geohashes.sort();
        geohashes.dedup();
        let index: HashMap<&GeohashCell, usize> =
            geohashes.iter().enumerate().map(|(i, g)| (g, i)).collect();
        let loc_geohash = cells.iter().map(|g| index[g]).collect();
        Ok(Vocab {
            n_locations: c.n_locations(),
            n_users: c.n_users(),
            geohash_precision,
            geohashes,
            loc_geohash,
            utc_offset_secs,
        })
    }

    pub fn n_geohashes(&self) -> usize {
        self.geohashes.len()
    }

    pub fn n_timeslots(&self) -> usize {
        N_TIMESLOTS
    }

    pub fn slot(&self, ts: i64) -> Timeslot {
        geo::timeslot_with_offset(ts, self.utc_offset_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(o: usize, d: usize, t: i64) -> Trip {
        Trip {
            origin: o,
            dest: d,
            pickup_ts: t,
            dropoff_ts: t + 600,
        }
    }

    fn corpus_with_lengths(lens: &[usize]) -> Corpus {
        let locations = (0..3)
            .map(|i| LocationRecord {
                loc_id: format!("L{i}"),
                point: GeoPoint {
                    lat: 1.3 + i as f64 * 0.01,
                    lon: 103.8,
                },
            })
            .collect();
        let users = (0..lens.len()).map(|i| format!("U{i}")).collect();
        let trips = lens
            .iter()
            .map(|&n| (0..n).map(|k| trip(k % 3, (k + 1) % 3, k as i64 * 1000)).collect())
            .collect();
        Corpus::new(locations, users, trips).unwrap()
    }

    #[test]
    fn split_counts() {
        let c = corpus_with_lengths(&[10, 3, 20, 30, 1]);
        let s = chronological_split(&c, 0.7).unwrap();
        let sizes: Vec<_> = s.train.trips.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![7, 3, 14, 21, 1]);
        let test: Vec<_> = s.test.trips.iter().map(Vec::len).collect();
        assert_eq!(test, vec![3, 0, 6, 9, 0]);
        assert_eq!(s.flagged, vec![1, 4]);
        assert_eq!(s.train.trips[2][..], c.trips[2][..14]);
        assert_eq!(s.test.trips[2][..], c.trips[2][14..]);
    }

    #[test]
    fn encoder_sequences() {
        let t = [trip(1, 11, 0), trip(2, 12, 10), trip(3, 13, 20)];
        let (o, d) = build_encoder_sequences(&t);
        assert_eq!(o.iter().map(|v| v.loc).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(d.iter().map(|v| v.loc).collect::<Vec<_>>(), vec![11, 12]);
        assert_eq!(o[0].ts, 10);
        assert_eq!(d[0].ts, 600);
        let (o, d) = build_encoder_sequences(&t[..2]);
        assert_eq!((o.len(), d.len()), (1, 1));
        let (o, d) = build_encoder_sequences(&t[..1]);
        assert!(o.is_empty() && d.is_empty());
    }

    #[test]
    fn training_examples() {
        let t = [trip(1, 11, 0), trip(2, 12, 10), trip(3, 13, 20)];
        let ex = build_training_examples(4, &t);
        assert_eq!(ex.len(), 2);
        assert_eq!((ex[0].origin, ex[0].prev_dest, ex[0].target), (2, 11, 12));
        assert_eq!((ex[1].origin, ex[1].prev_dest, ex[1].target), (3, 12, 13));
        assert_eq!(build_training_examples(0, &t[..2]).len(), 1);
        assert_eq!(build_encoder_sequences(&t).0.len(), ex.len());
    }

    #[test]
    fn corpus_sorts_and_validates() {
        let c = corpus_with_lengths(&[2]);
        let mut seqs = c.trips.clone();
        seqs[0].reverse();
        let sorted = Corpus::new(c.locations.clone(), c.users.clone(), seqs).unwrap();
        assert_eq!(sorted.trips, c.trips);
        let bad = vec![vec![trip(0, 9, 0)]];
        assert!(Corpus::new(c.locations.clone(), c.users.clone(), bad).is_err());
    }

    #[test]
    fn vocab_counts_distinct_cells() {
        let c = corpus_with_lengths(&[3]);
        let v = Vocab::build(&c, 5, 0).unwrap();
        assert_eq!(v.loc_geohash.len(), 3);
        let distinct: std::collections::BTreeSet<_> = v.loc_geohash.iter().collect();
        assert_eq!(distinct.len(), v.n_geohashes());
        assert_eq!(v.n_timeslots(), 8);
    }
}
