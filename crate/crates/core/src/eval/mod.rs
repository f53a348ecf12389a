//! Ranking metrics, test-set and cold-start evaluation, ablation variants
//! and hyperparameter sweeps.

mod cold_start;
mod metrics;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::dataset::{Split, Trip};
use crate::error::{ensure, Result};
use crate::model::{EncodedCache, Model, UserRef, Variant};

pub use cold_start::{cold_start_cohort, cold_start_eval, ColdCohort};
pub use metrics::{acc_at_k, average_precision, map_single_truth, rank_of};
pub use sweep::{sensitivity_sweep, SweepAxis, SweepRow};

/// What a ranker sees for one recommendation.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub user: UserRef,
    pub origin: usize,
    pub prev_dest: usize,
    pub pickup_ts: i64,
    /// Every earlier trip of the user, oldest first.
    pub history: &'a [Trip],
}

pub trait Ranker {
    fn name(&self) -> String;

    /// A full ranking of all locations, or `None` when the ranker has
    /// nothing to condition on and the query is skipped.
    fn rank(&self, q: &Query) -> Result<Option<Vec<usize>>>;
}

/// A trained model plus the states cached from its training sequences.
#[derive(Debug, Clone, Copy)]
pub struct ModelRanker<'a> {
    pub model: &'a Model,
    pub cache: &'a EncodedCache,
}

impl Ranker for ModelRanker<'_> {
    fn name(&self) -> String {
        self.model.config.variant.name().into()
    }

    fn rank(&self, q: &Query) -> Result<Option<Vec<usize>>> {
        let cached = match q.user {
            UserRef::Known(u) => self.model.config.variant.uses_cache() && self.cache.get(u).is_some(),
            UserRef::Cold => false,
        };
        if !cached && q.history.is_empty() {
            return Ok(None);
        }
        let p = self
            .model
            .predict(Some(self.cache), q.user, q.history, q.origin, q.pickup_ts, q.prev_dest)?;
        Ok(Some(crate::model::ranking(&p.probs)))
    }
}

/// Builds an untrained model of the named ablation kind.
pub fn build_variant(
    kind: &str,
    base: &crate::model::ModelConfig,
    vocab: crate::dataset::Vocab,
    tables: crate::dataset::IntervalTables,
) -> Result<Model> {
    let variant: Variant = kind.parse()?;
    Model::new(
        crate::model::ModelConfig {
            variant,
            ..base.clone()
        },
        vocab,
        tables,
    )
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc1: f64,
    pub acc5: f64,
    pub acc10: f64,
    pub map: f64,
    pub n_queries: usize,
    pub n_skipped: usize,
    pub seed: Option<u64>,
    /// Standard deviation of `[acc1, acc5, acc10, map]` across seeds.
    pub std: Option<[f64; 4]>,
}

impl EvalReport {
    /// Aggregates `(ranking, truth)` pairs.
    pub fn from_rankings(results: &[(Vec<usize>, usize)], n_skipped: usize) -> Result<Self> {
        let n = results.len();
        let mut hits = [0usize; 3];
        for (ranking, truth) in results {
            for (h, k) in hits.iter_mut().zip([1, 5, 10]) {
                *h += acc_at_k(ranking, *truth, k.min(ranking.len()))? as usize;
            }
        }
        let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
        Ok(EvalReport {
            acc1: frac(hits[0]),
            acc5: frac(hits[1]),
            acc10: frac(hits[2]),
            map: map_single_truth(results)?,
            n_queries: n,
            n_skipped,
            seed: None,
            std: None,
        })
    }

    pub fn metrics(&self) -> [f64; 4] {
        [self.acc1, self.acc5, self.acc10, self.map]
    }

    /// Mean over per-seed reports, with the population standard deviation.
    pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
        ensure!(!reports.is_empty(), "nothing to aggregate");
        let n = reports.len() as f64;
        let mut mean = [0.0; 4];
        for r in reports {
            for (m, v) in mean.iter_mut().zip(r.metrics()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 4];
        for r in reports {
            for ((s, v), m) in var.iter_mut().zip(r.metrics()).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        Ok(EvalReport {
            acc1: mean[0],
            acc5: mean[1],
            acc10: mean[2],
            map: mean[3],
            n_queries: reports.iter().map(|r| r.n_queries).sum(),
            n_skipped: reports.iter().map(|r| r.n_skipped).sum(),
            seed: None,
            std: Some(var.map(f64::sqrt)),
        })
    }
}

/// Runs `f` on every test query of the split. The previous destination
/// rolls through the test partition, starting from the last train trip.
pub(crate) fn for_each_test_query<F>(split: &Split, mut f: F) -> Result<()>
where
    F: FnMut(&Query, usize) -> Result<()>,
{
    ensure!(
        split.train.n_users() == split.test.n_users(),
        "train and test partitions disagree on users"
    );
    for (u, test) in split.test.trips.iter().enumerate() {
        if test.is_empty() {
            continue;
        }
        let full: Vec<Trip> = split.train.trips[u].iter().chain(test).copied().collect();
        let offset = split.train.trips[u].len();
        for i in 0..test.len() {
            let history = &full[..offset + i];
            let Some(prev) = history.last() else {
                continue;
            };
            let q = Query {
                user: UserRef::Known(u),
                origin: test[i].origin,
                prev_dest: prev.dest,
                pickup_ts: test[i].pickup_ts,
                history,
            };
            f(&q, test[i].dest)?;
        }
    }
    Ok(())
}

/// One query per test trip.
pub fn evaluate(ranker: &dyn Ranker, split: &Split) -> Result<EvalReport> {
    let mut results = Vec::new();
    let mut skipped = 0;
    let n_loc = split.test.n_locations();
    for_each_test_query(split, |q, truth| {
        match ranker.rank(q)? {
            Some(r) => {
                ensure!(r.len() == n_loc, "{} returned {} of {n_loc} locations", ranker.name(), r.len());
                results.push((r, truth));
            }
            None => skipped += 1,
        }
        Ok(())
    })?;
    EvalReport::from_rankings(&results, skipped)
}
