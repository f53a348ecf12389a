use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{Corpus, LocationRecord, Trip};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

const TRIPS_HEADER: [&str; 5] = ["user_id", "origin_id", "dest_id", "pickup_ts", "dropoff_ts"];
const LOCATIONS_HEADER: [&str; 3] = ["loc_id", "lat", "lon"];

/// A trips-file row with unresolved identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RawTrip {
    pub user_id: String,
    pub origin_id: String,
    pub dest_id: String,
    pub pickup_ts: i64,
    pub dropoff_ts: i64,
    #[serde(skip)]
    pub line: u64,
}

#[derive(Deserialize)]
struct LocationRow {
    loc_id: String,
    lat: f64,
    lon: f64,
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse {
            file: path.into(),
            line: 1,
            msg: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(rdr)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            file: path.into(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

pub fn read_locations(path: &Path) -> Result<Vec<LocationRecord>> {
    let mut rdr = reader(path, &LOCATIONS_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for row in rdr.deserialize::<LocationRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = out.len() as u64 + 2;
        let point = GeoPoint::new(row.lat, row.lon).map_err(|e| Error::Parse {
            file: path.into(),
            line,
            msg: e.to_string(),
        })?;
        if seen.insert(row.loc_id.clone(), line).is_some() {
            return Err(Error::Parse {
                file: path.into(),
                line,
                msg: format!("duplicate loc_id `{}`", row.loc_id),
            });
        }
        out.push(LocationRecord {
            loc_id: row.loc_id,
            point,
        });
    }
    Ok(out)
}

pub fn read_raw_trips(path: &Path) -> Result<Vec<RawTrip>> {
    let mut rdr = reader(path, &TRIPS_HEADER)?;
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(path, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut trip: RawTrip = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            file: path.into(),
            line,
            msg: e.to_string(),
        })?;
        if trip.dropoff_ts < trip.pickup_ts {
            return Err(Error::Parse {
                file: path.into(),
                line,
                msg: "dropoff_ts precedes pickup_ts".into(),
            });
        }
        trip.line = line;
        out.push(trip);
    }
    Ok(out)
}

/// Loads a corpus. Users are numbered by first appearance in the trips
/// file, locations by their order in the locations file.
pub fn load_corpus(trips_path: &Path, locations_path: &Path) -> Result<Corpus> {
    let locations = read_locations(locations_path)?;
    let raw = read_raw_trips(trips_path)?;
    let loc_index: HashMap<&str, usize> = locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.loc_id.as_str(), i))
        .collect();
    let mut users: Vec<String> = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut trips: Vec<Vec<Trip>> = Vec::new();
    for r in &raw {
        let resolve = |id: &str| {
            loc_index.get(id).copied().ok_or_else(|| Error::UnknownLocation {
                file: trips_path.into(),
                line: r.line,
                loc_id: id.to_string(),
            })
        };
        let origin = resolve(&r.origin_id)?;
        let dest = resolve(&r.dest_id)?;
        let u = *user_index.entry(r.user_id.clone()).or_insert_with(|| {
            users.push(r.user_id.clone());
            trips.push(Vec::new());
            users.len() - 1
        });
        trips[u].push(Trip {
            origin,
            dest,
            pickup_ts: r.pickup_ts,
            dropoff_ts: r.dropoff_ts,
        });
    }
    Corpus::new(locations, users, trips)
}

/// Writes the corpus in the same two-file CSV layout `load_corpus` reads.
pub fn write_corpus(c: &Corpus, trips_path: &Path, locations_path: &Path) -> Result<()> {
    write_locations(c, locations_path)?;
    write_trips(c, trips_path)
}

pub fn write_locations(c: &Corpus, path: &Path) -> Result<()> {
    let mut loc = String::from("loc_id,lat,lon\n");
    for l in &c.locations {
        loc.push_str(&format!("{},{},{}\n", l.loc_id, l.point.lat, l.point.lon));
    }
    write_file(path, loc.as_bytes())
}

pub fn write_trips(c: &Corpus, path: &Path) -> Result<()> {
    let mut trips = String::from("user_id,origin_id,dest_id,pickup_ts,dropoff_ts\n");
    for (u, seq) in c.trips.iter().enumerate() {
        for t in seq {
            trips.push_str(&format!(
                "{},{},{},{},{}\n",
                c.users[u],
                c.locations[t.origin].loc_id,
                c.locations[t.dest].loc_id,
                t.pickup_ts,
                t.dropoff_ts
            ));
        }
    }
    write_file(path, trips.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const LOCS: &str = "loc_id,lat,lon\nA,1.30,103.80\nB,1.31,103.81\nC,1.35,103.90\nD,1.40,103.70\nE,1.28,103.85\n";

    #[test]
    fn empty_trips_file() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\n");
        let l = write(dir.path(), "l.csv", LOCS);
        let c = load_corpus(&t, &l).unwrap();
        assert_eq!(c.n_users(), 0);
        assert_eq!(c.n_locations(), 5);
    }

    #[test]
    fn out_of_order_trips_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "t.csv",
            "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\nu1,B,C,2000,2600\nu1,A,B,1000,1500\n",
        );
        let l = write(dir.path(), "l.csv", LOCS);
        let c = load_corpus(&t, &l).unwrap();
        assert_eq!(c.trips[0][0].pickup_ts, 1000);
        assert_eq!(c.trips[0][1].pickup_ts, 2000);
    }

    #[test]
    fn fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "t.csv",
            "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\n\
             u1,A,B,0,600\nu2,B,C,10,700\nu3,C,D,20,900\nu1,B,E,3000,3600\nu2,E,A,4000,4500\n",
        );
        let l = write(dir.path(), "l.csv", LOCS);
        let c = load_corpus(&t, &l).unwrap();
        assert_eq!(c.users, vec!["u1", "u2", "u3"]);
        assert_eq!(c.n_locations(), 5);
        assert_eq!(c.n_trips(), 5);
        let s = c.stats();
        assert_eq!((s.users, s.origins, s.destinations), (3, 4, 5));
    }

    #[test]
    fn parse_and_reference_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "l.csv", LOCS);
        let t = write(
            dir.path(),
            "t.csv",
            "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\nu1,A,B,0,600\nu1,A,B,zz,600\n",
        );
        match load_corpus(&t, &l) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let t = write(
            dir.path(),
            "t2.csv",
            "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\nu1,A,B,0,600\nu1,A,Q,10,600\n",
        );
        match load_corpus(&t, &l) {
            Err(Error::UnknownLocation { line, loc_id, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(loc_id, "Q");
            }
            other => panic!("{other:?}"),
        }
        let bad_header = write(dir.path(), "t3.csv", "user,origin\n");
        assert!(matches!(load_corpus(&bad_header, &l), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_corpus(&dir.path().join("missing.csv"), &l),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "t.csv",
            "user_id,origin_id,dest_id,pickup_ts,dropoff_ts\nu1,A,B,0,600\nu2,B,C,10,700\n",
        );
        let l = write(dir.path(), "l.csv", LOCS);
        let c = load_corpus(&t, &l).unwrap();
        let (t2, l2) = (dir.path().join("t2.csv"), dir.path().join("l2.csv"));
        write_corpus(&c, &t2, &l2).unwrap();
        assert_eq!(load_corpus(&t2, &l2).unwrap(), c);
    }
}
