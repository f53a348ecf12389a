use std::collections::HashSet;

use super::{Corpus, Trip};

/// Result of [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub corpus: Corpus,
    /// Identifiers of users dropped by either filter, in input order.
    pub removed_users: Vec<String>,
    /// Set when nothing survived the filters.
    pub empty_warning: bool,
}

/// Alternates the user trip-count filter and the location distinct-user
/// filter until neither removes anything, then re-indexes the surviving
/// users and locations in their original relative order.
pub fn preprocess(c: &Corpus, min_trips: usize, min_users: usize) -> Preprocessed {
    let mut user_alive = vec![true; c.n_users()];
    let mut loc_alive = vec![true; c.n_locations()];
    let mut trips: Vec<Vec<Trip>> = c.trips.clone();

    loop {
        let mut changed = false;
        for (u, seq) in trips.iter_mut().enumerate() {
            if user_alive[u] && seq.len() < min_trips {
                user_alive[u] = false;
                seq.clear();
                changed = true;
            }
        }

        let mut visitors: Vec<HashSet<usize>> = vec![HashSet::new(); c.n_locations()];
        for (u, seq) in trips.iter().enumerate() {
            for t in seq {
                visitors[t.origin].insert(u);
                visitors[t.dest].insert(u);
            }
        }
        for (l, alive) in loc_alive.iter_mut().enumerate() {
            if *alive && visitors[l].len() < min_users {
                *alive = false;
                changed = true;
            }
        }
        for seq in trips.iter_mut() {
            seq.retain(|t| loc_alive[t.origin] && loc_alive[t.dest]);
        }
        if !changed {
            break;
        }
    }

    let mut new_loc = vec![usize::MAX; c.n_locations()];
    let mut locations = Vec::new();
    for (l, rec) in c.locations.iter().enumerate() {
        if loc_alive[l] {
            new_loc[l] = locations.len();
            locations.push(rec.clone());
        }
    }
    let mut users = Vec::new();
    let mut kept = Vec::new();
    let mut removed_users = Vec::new();
    for (u, seq) in trips.into_iter().enumerate() {
        if user_alive[u] {
            users.push(c.users[u].clone());
            kept.push(
                seq.into_iter()
                    .map(|t| Trip {
                        origin: new_loc[t.origin],
                        dest: new_loc[t.dest],
                        ..t
                    })
                    .collect(),
            );
        } else {
            removed_users.push(c.users[u].clone());
        }
    }
    let corpus = Corpus {
        locations,
        users,
        trips: kept,
    };
    let empty_warning = corpus.is_empty();
    Preprocessed {
        corpus,
        removed_users,
        empty_warning,
    }
}
