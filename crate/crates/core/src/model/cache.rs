use serde::{Deserialize, Serialize};

use super::{Model, Variant};
use crate::dataset::{build_encoder_sequences, Corpus, Role, Trip, Visit};
use crate::error::{ensure, Error, Result};
use crate::nn::Graph;

/// The user behind a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserRef {
    Known(usize),
    /// No trained embedding; the mean user vector stands in.
    Cold,
}

/// One encoded state with its provenance in the visit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedState {
    pub h: Vec<f64>,
    pub role: Role,
    /// 1-based encoder timestep.
    pub step: usize,
    /// Location visited at this step.
    pub loc: usize,
}

/// Encoder states computed once from each user's training trips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodedCache {
    pub users: Vec<Option<Vec<CachedState>>>,
}

impl EncodedCache {
    pub fn get(&self, user: usize) -> Option<&[CachedState]> {
        self.users.get(user).and_then(|s| s.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    /// Per state, per dimension attention weights.
    pub attention: Option<Vec<Vec<f64>>>,
}

/// Top destinations and the attention behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub top: Vec<(usize, f64)>,
    /// `(role, step, loc, mean weight over dimensions)` per state.
    pub states: Vec<(Role, usize, usize, f64)>,
}

/// Indices sorted by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn top_k(probs: &[f64], k: usize) -> Vec<(usize, f64)> {
    ranking(probs).into_iter().take(k).map(|i| (i, probs[i])).collect()
}

impl Model {
    pub fn build_cache(&self, train: &Corpus) -> Result<EncodedCache> {
        ensure!(train.n_users() == self.vocab.n_users, "cache corpus does not match the vocabulary");
        let users = train
            .trips
            .iter()
            .map(|trips| {
                let (o, d) = build_encoder_sequences(trips);
                if o.is_empty() {
                    Ok(None)
                } else {
                    self.encode_user(&o, &d).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        Ok(EncodedCache { users })
    }

    /// Scores every location given already encoded states.
    pub fn score_states(
        &self,
        user: UserRef,
        origin: usize,
        prev_dest: usize,
        states: &[CachedState],
    ) -> Result<Prediction> {
        ensure!(
            self.config.variant.uses_cache(),
            "{} cannot score from cached states",
            self.config.variant
        );
        ensure!(!states.is_empty(), "no encoded states to attend over");
        let mut g = Graph::new(&self.store);
        let nodes: Vec<_> = states.iter().map(|s| g.leaf(s.h.clone())).collect();
        let keys = self.attention_keys(&mut g, &nodes)?;
        let u = self.user_node(&mut g, user)?;
        let (y, att) = self.decode(&mut g, u, origin, prev_dest, &nodes, &keys)?;
        let logits = self.logits(&mut g, y)?;
        Ok(Prediction {
            probs: crate::nn::softmax(g.value(logits)),
            attention: att.and_then(|a| g.attention_weights(a)),
        })
    }

    /// Encodes `history` followed by the current origin, as done for
    /// users without cached states.
    pub fn encode_history(&self, history: &[Trip], origin: usize, pickup_ts: i64) -> Result<Vec<CachedState>> {
        ensure!(!history.is_empty(), "a query needs at least one prior trip");
        let (mut o, mut d) = build_encoder_sequences(history);
        o.push(Visit { loc: origin, ts: pickup_ts });
        d.push(Visit::dest_of(history.last().unwrap()));
        self.encode_user(&o, &d)
    }

    /// Full prediction for a query. Known users with cached states use
    /// them; everyone else is encoded from `history`.
    pub fn predict(
        &self,
        cache: Option<&EncodedCache>,
        user: UserRef,
        history: &[Trip],
        origin: usize,
        pickup_ts: i64,
        prev_dest: usize,
    ) -> Result<Prediction> {
        if self.config.variant == Variant::EncoderOnly {
            let states = self.encode_history(history, origin, pickup_ts)?;
            let n = states.len() / 2;
            let y: Vec<f64> = states[n - 1].h.iter().chain(&states[2 * n - 1].h).copied().collect();
            return Ok(Prediction {
                probs: self.predict_distribution(&y)?,
                attention: None,
            });
        }
        let cached = match (user, cache) {
            (UserRef::Known(u), Some(c)) => c.get(u),
            _ => None,
        };
        match cached {
            Some(states) => self.score_states(user, origin, prev_dest, states),
            None => {
                let states = self.encode_history(history, origin, pickup_ts)?;
                self.score_states(user, origin, prev_dest, &states)
            }
        }
    }

    /// Top-`k` destinations for a known user from cached states.
    pub fn recommend(
        &self,
        cache: &EncodedCache,
        user: usize,
        origin: usize,
        prev_dest: usize,
        k: usize,
    ) -> Result<Vec<(usize, f64)>> {
        Ok(self.explain(cache, user, origin, prev_dest, k)?.top)
    }

    pub fn explain(
        &self,
        cache: &EncodedCache,
        user: usize,
        origin: usize,
        prev_dest: usize,
        k: usize,
    ) -> Result<Explanation> {
        if user >= self.vocab.n_users {
            return Err(Error::ColdStart(format!("user {user} has no trained embedding")));
        }
        let states = cache
            .get(user)
            .ok_or_else(|| Error::ColdStart(format!("user {user} has no encoded history")))?;
        let p = self.score_states(UserRef::Known(user), origin, prev_dest, states)?;
        let weights = p.attention.clone().unwrap_or_default();
        let states = states
            .iter()
            .zip(weights.iter().map(Some).chain(std::iter::repeat(None)))
            .map(|(s, w)| {
                let mean = w.map_or(0.0, |w| w.iter().sum::<f64>() / w.len().max(1) as f64);
                (s.role, s.step, s.loc, mean)
            })
            .collect();
        Ok(Explanation {
            top: top_k(&p.probs, k),
            states,
        })
    }
}
