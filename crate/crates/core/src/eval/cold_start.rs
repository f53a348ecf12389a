use std::collections::HashMap;

use super::{EvalReport, Query, Ranker};
use crate::dataset::{Corpus, Trip};
use crate::error::{ensure, Result};
use crate::model::UserRef;

/// Users dropped by the trip-count filter, with trips remapped into the
/// model's location indices. Trips touching unknown locations are dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColdCohort {
    pub users: Vec<String>,
    pub trips: Vec<Vec<Trip>>,
}

impl ColdCohort {
    /// Queries available: every trip after a user's first.
    pub fn n_queries(&self) -> usize {
        self.trips.iter().map(|t| t.len().saturating_sub(1)).sum()
    }
}

pub fn cold_start_cohort(raw: &Corpus, vocab_corpus: &Corpus, min_trips: usize) -> ColdCohort {
    let index: HashMap<&str, usize> = vocab_corpus
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.loc_id.as_str(), i))
        .collect();
    let mut cohort = ColdCohort::default();
    for (name, trips) in raw.users.iter().zip(&raw.trips) {
        if trips.len() >= min_trips {
            continue;
        }
        let id = |l: usize| index.get(raw.locations[l].loc_id.as_str()).copied();
        let kept = trips
            .iter()
            .filter_map(|t| {
                Some(Trip {
                    origin: id(t.origin)?,
                    dest: id(t.dest)?,
                    ..*t
                })
            })
            .collect();
        cohort.users.push(name.clone());
        cohort.trips.push(kept);
    }
    cohort
}

/// Every trip after a cold user's first is a query, conditioned on that
/// user's earlier trips.
pub fn cold_start_eval(ranker: &dyn Ranker, cohort: &ColdCohort) -> Result<EvalReport> {
    ensure!(!cohort.users.is_empty(), "no cold-start users");
    let mut results = Vec::new();
    let mut skipped = 0;
    for trips in &cohort.trips {
        for j in 1..trips.len() {
            let q = Query {
                user: UserRef::Cold,
                origin: trips[j].origin,
                prev_dest: trips[j - 1].dest,
                pickup_ts: trips[j].pickup_ts,
                history: &trips[..j],
            };
            match ranker.rank(&q)? {
                Some(r) => results.push((r, trips[j].dest)),
                None => skipped += 1,
            }
        }
    }
    EvalReport::from_rankings(&results, skipped)
}
