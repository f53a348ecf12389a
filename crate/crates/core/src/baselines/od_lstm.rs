use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Corpus, Trip};
use crate::error::{ensure, Result};
use crate::eval::{Query, Ranker};
use crate::model::{ranking, ModelConfig};
use crate::nn::{self, Adam, Graph, Init, NodeId, ParamId, ParamStore};
use crate::stlstm::LstmWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct OdLstmReport {
    pub loss_curve: Vec<f64>,
}

/// A single LSTM over per-trip inputs `embed(o_j) ∥ embed(d_{j-1})`,
/// followed by a softmax head over locations.
#[derive(Debug, Clone, PartialEq)]
pub struct OdLstm {
    pub config: ModelConfig,
    pub n_locations: usize,
    pub store: ParamStore,
    pub w_l: ParamId,
    pub lstm: LstmWeights,
    pub w_loc: ParamId,
}

impl OdLstm {
    /// Uses `dim`, `hidden`, `lr`, `epochs` and `seed` from `config`.
    pub fn new(config: ModelConfig, n_locations: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w_l = store.init("w_l", n_locations, config.dim, Init::Embedding, &mut rng)?;
        let lstm = LstmWeights::register(&mut store, "lstm", 2 * config.dim, config.hidden, &mut rng)?;
        let w_loc = store.init("w_loc", config.hidden, n_locations, Init::Xavier, &mut rng)?;
        Ok(OdLstm {
            config,
            n_locations,
            store,
            w_l,
            lstm,
            w_loc,
        })
    }

    fn inputs(&self, g: &mut Graph, pairs: &[(usize, usize)]) -> Result<Vec<NodeId>> {
        pairs
            .iter()
            .map(|&(o, d)| {
                ensure!(o < self.n_locations && d < self.n_locations, "location out of range");
                let o = g.embed(self.w_l, o)?;
                let d = g.embed(self.w_l, d)?;
                Ok(g.concat(&[o, d]))
            })
            .collect()
    }

    /// `(o_j, d_{j-1})` for consecutive trips.
    fn pairs(trips: &[Trip]) -> Vec<(usize, usize)> {
        trips.windows(2).map(|w| (w[1].origin, w[0].dest)).collect()
    }

    /// Mean cross-entropy over a user's trips, `None` below two trips.
    pub fn user_loss(&self, g: &mut Graph, trips: &[Trip]) -> Result<Option<NodeId>> {
        let pairs = Self::pairs(trips);
        if pairs.is_empty() {
            return Ok(None);
        }
        let xs = self.inputs(g, &pairs)?;
        let hs = self.lstm.encode(g, &xs)?;
        let mut losses = Vec::with_capacity(hs.len());
        for (h, t) in hs.into_iter().zip(&trips[1..]) {
            let logits = g.affine(&[(self.w_loc, 0, h)], None)?;
            losses.push(g.softmax_cross_entropy(logits, t.dest)?);
        }
        Ok(Some(g.mean(&losses)?))
    }

    pub fn train(&mut self, train: &Corpus) -> Result<OdLstmReport> {
        ensure!(train.n_locations() == self.n_locations, "corpus does not match the vocabulary");
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x0d15);
        let mut adam = Adam::new(&self.store, self.config.lr);
        let mut order: Vec<usize> = (0..train.n_users()).filter(|&u| train.trips[u].len() >= 2).collect();
        let mut loss_curve = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &u in &order {
                let (loss, grads) = {
                    let mut g = Graph::new(&self.store);
                    let node = self.user_loss(&mut g, &train.trips[u])?.expect("two trips");
                    (g.value(node)[0], g.backward(node)?)
                };
                adam.step(&mut self.store, &grads);
                total += loss;
            }
            loss_curve.push(if order.is_empty() { 0.0 } else { total / order.len() as f64 });
        }
        Ok(OdLstmReport { loss_curve })
    }

    /// Distribution over the next destination after `history` given the
    /// current origin.
    pub fn predict(&self, history: &[Trip], origin: usize, prev_dest: usize) -> Result<Vec<f64>> {
        let mut pairs = Self::pairs(history);
        pairs.push((origin, prev_dest));
        let mut g = Graph::new(&self.store);
        let xs = self.inputs(&mut g, &pairs)?;
        let hs = self.lstm.encode(&mut g, &xs)?;
        let h = g.value(*hs.last().unwrap()).to_vec();
        Ok(nn::softmax(&nn::linear(self.store.value(self.w_loc), &h, None)?))
    }
}

impl Ranker for OdLstm {
    fn name(&self) -> String {
        "od-lstm".into()
    }

    fn rank(&self, q: &Query) -> Result<Option<Vec<usize>>> {
        Ok(Some(ranking(&self.predict(q.history, q.origin, q.prev_dest)?)))
    }
}
