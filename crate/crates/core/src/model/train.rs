use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttentionContext, Model, UserRef, Variant};
use crate::dataset::{build_encoder_sequences, build_training_examples, Corpus, Trip};
use crate::error::{ensure, Result};
use crate::nn::{Adam, Graph, NodeId};

const SHUFFLE_STREAM: u64 = 0x005e_ed0f_u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-user loss for each epoch.
    pub loss_curve: Vec<f64>,
    pub n_users_trained: usize,
    pub n_examples: usize,
}

/// Mean cross-entropy over one user's training examples, or `None` when
/// the user has fewer than two trips.
pub fn user_loss(model: &Model, g: &mut Graph, user: usize, trips: &[Trip]) -> Result<Option<NodeId>> {
    let (origins, dests) = build_encoder_sequences(trips);
    if origins.is_empty() {
        return Ok(None);
    }
    let examples = build_training_examples(user, trips);
    let enc = model.encode_nodes(g, &origins, &dests)?;
    let v = model.config.variant;
    let states = enc.all();
    let keys = model.attention_keys(g, &states)?;
    let u = model.user_node(g, UserRef::Known(user))?;
    let n = origins.len();

    let mut losses = Vec::with_capacity(examples.len());
    for (k, ex) in examples.iter().enumerate() {
        let y = if v == Variant::EncoderOnly {
            g.concat(&[enc.origin[k], enc.dest[k]])
        } else {
            match model.config.attention_context {
                AttentionContext::All => model.decode(g, u, ex.origin, ex.prev_dest, &states, &keys)?.0,
                AttentionContext::Causal => {
                    // Origin state t sits at index t-1, destination state t at n+t-1.
                    let idx: Vec<usize> = (0..=k).chain(n..=n + k).collect();
                    let s: Vec<_> = idx.iter().map(|&i| states[i]).collect();
                    let kk: Vec<_> = idx.iter().map(|&i| keys[i]).collect();
                    model.decode(g, u, ex.origin, ex.prev_dest, &s, &kk)?.0
                }
            }
        };
        let logits = model.logits(g, y)?;
        losses.push(g.softmax_cross_entropy(logits, ex.target)?);
    }
    Ok(Some(g.mean(&losses)?))
}

/// Trains with Adam, one step per user, users visited in a seeded
/// shuffled order every epoch.
pub fn train(model: &mut Model, train: &Corpus) -> Result<TrainReport> {
    ensure!(
        train.n_users() == model.vocab.n_users && train.n_locations() == model.vocab.n_locations,
        "training corpus does not match the model vocabulary"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ SHUFFLE_STREAM);
    let mut adam = Adam::new(&model.store, model.config.lr);
    let mut order: Vec<usize> = (0..train.n_users()).filter(|&u| train.trips[u].len() >= 2).collect();
    let n_examples = order.iter().map(|&u| train.trips[u].len() - 1).sum();
    let mut loss_curve = Vec::with_capacity(model.config.epochs);

    for _ in 0..model.config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &u in &order {
            let (loss, grads) = {
                let mut g = Graph::new(&model.store);
                let node = user_loss(model, &mut g, u, &train.trips[u])?.expect("user has two trips");
                (g.value(node)[0], g.backward(node)?)
            };
            ensure!(loss.is_finite(), "non-finite loss for user {u}");
            adam.step(&mut model.store, &grads);
            total += loss;
        }
        loss_curve.push(if order.is_empty() { 0.0 } else { total / order.len() as f64 });
    }
    Ok(TrainReport {
        loss_curve,
        n_users_trained: order.len(),
        n_examples,
    })
}
