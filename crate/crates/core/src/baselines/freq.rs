use crate::dataset::Corpus;
use crate::error::Result;
use crate::eval::{Query, Ranker};
use crate::model::UserRef;

/// Destination counts from the training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyModel {
    pub global: Vec<u64>,
    pub per_user: Vec<Vec<u64>>,
}

impl FrequencyModel {
    pub fn fit(train: &Corpus) -> Self {
        let n = train.n_locations();
        let mut global = vec![0; n];
        let per_user = train
            .trips
            .iter()
            .map(|trips| {
                let mut counts = vec![0; n];
                for t in trips {
                    counts[t.dest] += 1;
                    global[t.dest] += 1;
                }
                counts
            })
            .collect();
        FrequencyModel { global, per_user }
    }

    pub fn n_locations(&self) -> usize {
        self.global.len()
    }

    fn user_counts(&self, user: UserRef) -> Option<&[u64]> {
        match user {
            UserRef::Known(u) => self.per_user.get(u).map(Vec::as_slice),
            UserRef::Cold => None,
        }
    }

    /// Descending global count, ties by ascending index.
    pub fn top_rank(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_locations()).collect();
        idx.sort_by(|&a, &b| self.global[b].cmp(&self.global[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    /// The user's visited destinations by descending count (ties by
    /// index), then every other location in global order.
    pub fn u_top_rank(&self, user: UserRef, k: usize) -> Vec<usize> {
        let global = self.top_rank(self.n_locations());
        let Some(counts) = self.user_counts(user) else {
            return global.into_iter().take(k).collect();
        };
        let mut visited: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0).collect();
        visited.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        visited
            .into_iter()
            .chain(global.into_iter().filter(|&l| counts[l] == 0))
            .take(k)
            .collect()
    }

    /// `lambda * user proportion + (1 - lambda) * global proportion`,
    /// ties by ascending index.
    pub fn taxi_rank(&self, user: UserRef, lambda: f64, k: usize) -> Vec<usize> {
        let scores = self.taxi_scores(user, lambda);
        let mut idx = crate::model::ranking(&scores);
        idx.truncate(k);
        idx
    }

    pub fn taxi_scores(&self, user: UserRef, lambda: f64) -> Vec<f64> {
        let proportions = |c: &[u64]| {
            let total: u64 = c.iter().sum();
            c.iter()
                .map(|&x| if total == 0 { 0.0 } else { x as f64 / total as f64 })
                .collect::<Vec<_>>()
        };
        let g = proportions(&self.global);
        let u = self
            .user_counts(user)
            .map(proportions)
            .unwrap_or_else(|| vec![0.0; self.n_locations()]);
        g.iter().zip(&u).map(|(g, u)| lambda * u + (1.0 - lambda) * g).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyRule {
    Top,
    UserTop,
    Taxi { lambda: f64 },
}

/// A frequency model wrapped as a [`Ranker`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRanker {
    pub model: FrequencyModel,
    pub rule: FrequencyRule,
}

impl FrequencyRanker {
    pub fn new(model: FrequencyModel, rule: FrequencyRule) -> Self {
        FrequencyRanker { model, rule }
    }
}

impl Ranker for FrequencyRanker {
    fn name(&self) -> String {
        match self.rule {
            FrequencyRule::Top => "top".into(),
            FrequencyRule::UserTop => "u-top".into(),
            FrequencyRule::Taxi { .. } => "taxi".into(),
        }
    }

    fn rank(&self, q: &Query) -> Result<Option<Vec<usize>>> {
        let n = self.model.n_locations();
        Ok(Some(match self.rule {
            FrequencyRule::Top => self.model.top_rank(n),
            FrequencyRule::UserTop => self.model.u_top_rank(q.user, n),
            FrequencyRule::Taxi { lambda } => self.model.taxi_rank(q.user, lambda, n),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LocationRecord, Trip};
    use crate::geo::GeoPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn corpus(n_loc: usize, trips: Vec<Vec<(usize, usize)>>) -> Corpus {
        let locations = (0..n_loc)
            .map(|i| LocationRecord {
                loc_id: format!("L{i}"),
                point: GeoPoint {
                    lat: 1.3,
                    lon: 103.8 + i as f64 * 0.01,
                },
            })
            .collect();
        let users = (0..trips.len()).map(|u| format!("U{u}")).collect();
        let trips = trips
            .into_iter()
            .map(|seq| {
                seq.into_iter()
                    .enumerate()
                    .map(|(k, (o, d))| Trip {
                        origin: o,
                        dest: d,
                        pickup_ts: k as i64 * 100,
                        dropoff_ts: k as i64 * 100 + 50,
                    })
                    .collect()
            })
            .collect();
        Corpus::new(locations, users, trips).unwrap()
    }

    #[test]
    fn top_orders_by_count_then_index() {
        let c = corpus(3, vec![vec![(1, 0); 5], vec![(0, 1), (0, 1), (0, 1), (0, 2), (0, 2), (0, 2)]]);
        let m = FrequencyModel::fit(&c);
        assert_eq!(m.top_rank(3), vec![0, 1, 2]);
        assert_eq!(m.top_rank(2), vec![0, 1]);
        let empty = FrequencyModel::fit(&corpus(4, vec![]));
        assert_eq!(empty.top_rank(4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn u_top_backfills_with_global_order() {
        let c = corpus(4, vec![vec![(0, 3)], vec![(0, 1), (0, 1), (0, 2)]]);
        let m = FrequencyModel::fit(&c);
        assert_eq!(m.u_top_rank(UserRef::Known(0), 4), vec![3, 1, 2, 0]);
        assert_eq!(m.u_top_rank(UserRef::Cold, 4), m.top_rank(4));
        assert_eq!(m.u_top_rank(UserRef::Known(9), 4), m.top_rank(4));
    }

    #[test]
    fn taxi_limits_and_hand_mix() {
        let c = corpus(3, vec![vec![(0, 2), (0, 2), (0, 1), (0, 0)], vec![(0, 1); 4]]);
        let m = FrequencyModel::fit(&c);
        let u = UserRef::Known(0);
        assert_eq!(m.taxi_rank(u, 1.0, 3), m.u_top_rank(u, 3));
        assert_eq!(m.taxi_rank(u, 0.0, 3), m.top_rank(3));
        // user: 0.25, 0.25, 0.5; global: 0.125, 0.625, 0.25
        let s = m.taxi_scores(u, 0.5);
        for (a, b) in s.iter().zip([0.1875, 0.4375, 0.375]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(m.taxi_rank(u, 0.5, 3), vec![1, 2, 0]);
    }

    /// String-keyed counting oracle, independent of the index-based fit.
    fn oracle(c: &Corpus, user: Option<usize>, lambda: Option<f64>) -> Vec<usize> {
        let mut g: HashMap<&str, f64> = HashMap::new();
        let mut u: HashMap<&str, f64> = HashMap::new();
        for (ui, trips) in c.trips.iter().enumerate() {
            for t in trips {
                let id = c.locations[t.dest].loc_id.as_str();
                *g.entry(id).or_default() += 1.0;
                if Some(ui) == user {
                    *u.entry(id).or_default() += 1.0;
                }
            }
        }
        let ids: Vec<&str> = c.locations.iter().map(|l| l.loc_id.as_str()).collect();
        let gc = |id: &str| g.get(id).copied().unwrap_or(0.0);
        let uc = |id: &str| u.get(id).copied().unwrap_or(0.0);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        match lambda {
            None if user.is_none() => order.sort_by(|&a, &b| gc(ids[b]).total_cmp(&gc(ids[a])).then(a.cmp(&b))),
            None => {
                let grank = oracle(c, None, None);
                let pos = |l: usize| grank.iter().position(|&x| x == l).unwrap();
                order.sort_by(|&a, &b| {
                    let (ca, cb) = (uc(ids[a]), uc(ids[b]));
                    match (ca > 0.0, cb > 0.0) {
                        (true, true) => cb.total_cmp(&ca).then(a.cmp(&b)),
                        (true, false) => std::cmp::Ordering::Less,
                        (false, true) => std::cmp::Ordering::Greater,
                        (false, false) => pos(a).cmp(&pos(b)),
                    }
                });
            }
            Some(lam) => {
                let gt: f64 = g.values().sum();
                let ut: f64 = u.values().sum();
                let score = |id: &str| {
                    let up = if ut > 0.0 { uc(id) / ut } else { 0.0 };
                    let gp = if gt > 0.0 { gc(id) / gt } else { 0.0 };
                    lam * up + (1.0 - lam) * gp
                };
                order.sort_by(|&a, &b| score(ids[b]).total_cmp(&score(ids[a])).then(a.cmp(&b)));
            }
        }
        order
    }

    #[test]
    fn rankings_match_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n_loc = rng.gen_range(1..9);
            let n_users = rng.gen_range(1..6);
            let trips = (0..n_users)
                .map(|_| {
                    (0..rng.gen_range(0..12))
                        .map(|_| (rng.gen_range(0..n_loc), rng.gen_range(0..n_loc)))
                        .collect()
                })
                .collect();
            let c = corpus(n_loc, trips);
            let m = FrequencyModel::fit(&c);
            assert_eq!(m.top_rank(n_loc), oracle(&c, None, None));
            for u in 0..n_users {
                let r = UserRef::Known(u);
                assert_eq!(m.u_top_rank(r, n_loc), oracle(&c, Some(u), None));
                assert_eq!(m.taxi_rank(r, 0.5, n_loc), oracle(&c, Some(u), Some(0.5)));
                for rank in [m.u_top_rank(r, n_loc), m.taxi_rank(r, 0.5, n_loc)] {
                    let mut sorted = rank.clone();
                    sorted.sort();
                    assert_eq!(sorted, (0..n_loc).collect::<Vec<_>>());
                }
            }
        }
    }
}
