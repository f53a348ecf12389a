//! The encoder-decoder recommender: multi-modal embeddings, separate
//! origin and destination encoders, and the personalized per-dimension
//! attention decoder, plus the ablation variants built from the same parts.

mod cache;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{IntervalTables, Role, Visit, Vocab};
use crate::error::{ensure, Error, Result};
use crate::nn::{self, Graph, Init, NodeId, ParamId, ParamStore};
use crate::stlstm::{LstmWeights, StDims, StInputNodes, StLstmWeights};

pub use cache::{ranking, CachedState, EncodedCache, Explanation, Prediction, UserRef};
pub use train::{train, user_loss, TrainReport};

/// Which encoded states a training example may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionContext {
    /// Every state of the user's training sequence.
    #[default]
    All,
    /// Only states up to the example's own timestep.
    Causal,
}

/// The full model and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    StodPpa,
    /// Plain LSTM encoders instead of spatio-temporal ones.
    OdPpa,
    /// No attention: the current-origin and previous-destination hidden
    /// states are concatenated.
    EncoderOnly,
    /// No encoders: the decoder attends over raw location embeddings.
    DecoderOnly,
    /// Unpersonalized attention, user embedding added to its output.
    UserAdd,
    /// Unpersonalized attention, user embedding concatenated to its output.
    UserConcat,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::StodPpa,
        Variant::OdPpa,
        Variant::EncoderOnly,
        Variant::DecoderOnly,
        Variant::UserAdd,
        Variant::UserConcat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::StodPpa => "stod-ppa",
            Variant::OdPpa => "od-ppa",
            Variant::EncoderOnly => "encoder-only",
            Variant::DecoderOnly => "decoder-only",
            Variant::UserAdd => "user-add",
            Variant::UserConcat => "user-concat",
        }
    }

    fn has_attention(self) -> bool {
        self != Variant::EncoderOnly
    }

    fn personalized_attention(self) -> bool {
        matches!(self, Variant::StodPpa | Variant::OdPpa | Variant::DecoderOnly)
    }

    /// Whether test-time scoring can use states cached from training.
    pub fn uses_cache(self) -> bool {
        self != Variant::EncoderOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub geohash_precision: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub attention_context: AttentionContext,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 256,
            hidden: 256,
            lr: 1e-4,
            epochs: 15,
            geohash_precision: 5,
            leaky_slope: 0.01,
            seed: 0,
            attention_context: AttentionContext::All,
            variant: Variant::StodPpa,
        }
    }
}

impl ModelConfig {
    /// Small profile for synthetic runs: `dim = hidden = 32`, `lr = 1e-3`.
    pub fn desk() -> Self {
        ModelConfig {
            dim: 32,
            hidden: 32,
            lr: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::Config("dim and hidden must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(1..=12).contains(&self.geohash_precision) {
            return Err(Error::Config(format!(
                "geohash precision {} outside [1, 12]",
                self.geohash_precision
            )));
        }
        if self.variant == Variant::UserAdd && self.dim != self.hidden {
            return Err(Error::Config("user-add needs dim == hidden".into()));
        }
        Ok(())
    }
}

/// Encoder flavour per variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoder {
    SpatioTemporal(StLstmWeights),
    Lstm(LstmWeights),
    /// States are the raw location embeddings.
    Identity,
}

/// Parameter handles into [`Model::store`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelWeights {
    pub w_l: ParamId,
    pub w_g: Option<ParamId>,
    pub w_t: Option<ParamId>,
    pub w_u: Option<ParamId>,
    pub enc_o: Encoder,
    pub enc_d: Encoder,
    pub w_a: Option<ParamId>,
    pub w_loc: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tables: IntervalTables,
    pub store: ParamStore,
    pub weights: ModelWeights,
}

/// Encoder input for one visit.
#[derive(Debug, Clone, Copy)]
enum VisitNodes {
    St(StInputNodes),
    Loc(NodeId),
}

/// Encoded states of one user, origin block first.
#[derive(Debug, Clone)]
pub(crate) struct EncodedNodes {
    pub origin: Vec<NodeId>,
    pub dest: Vec<NodeId>,
}

impl EncodedNodes {
    pub fn all(&self) -> Vec<NodeId> {
        self.origin.iter().chain(&self.dest).copied().collect()
    }
}

impl Model {
    /// Registers and initializes every parameter of the configured variant.
    pub fn new(config: ModelConfig, vocab: Vocab, tables: IntervalTables) -> Result<Self> {
        config.validate()?;
        ensure!(
            tables.n == vocab.n_locations,
            "interval tables cover {} locations, vocab has {}",
            tables.n,
            vocab.n_locations
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (dim, hidden, n_loc) = (config.dim, config.hidden, vocab.n_locations);
        let v = config.variant;

        let w_l = store.init("w_l", n_loc, dim, Init::Embedding, &mut rng)?;
        let spatio_temporal = matches!(
            v,
            Variant::StodPpa | Variant::EncoderOnly | Variant::UserAdd | Variant::UserConcat
        );
        let (w_g, w_t) = if spatio_temporal {
            (
                Some(store.init("w_g", vocab.n_geohashes(), dim, Init::Embedding, &mut rng)?),
                Some(store.init("w_t", vocab.n_timeslots(), dim, Init::Embedding, &mut rng)?),
            )
        } else {
            (None, None)
        };
        let w_u = if v == Variant::EncoderOnly {
            None
        } else {
            Some(store.init("w_u", vocab.n_users, dim, Init::Embedding, &mut rng)?)
        };
        let dims = StDims {
            dim,
            hidden,
            n_locations: n_loc,
        };
        let mut encoder = |prefix: &str, store: &mut ParamStore| -> Result<Encoder> {
            Ok(match v {
                Variant::OdPpa => Encoder::Lstm(LstmWeights::register(store, prefix, dim, hidden, &mut rng)?),
                Variant::DecoderOnly => Encoder::Identity,
                _ => Encoder::SpatioTemporal(StLstmWeights::register(store, prefix, dims, &mut rng)?),
            })
        };
        let enc_o = encoder("enc_o", &mut store)?;
        let enc_d = encoder("enc_d", &mut store)?;

        let state = if v == Variant::DecoderOnly { dim } else { hidden };
        let query = if v.personalized_attention() { 3 * dim } else { 2 * dim };
        let w_a = if v.has_attention() {
            Some(store.init("w_a", query + state, state, Init::Xavier, &mut rng)?)
        } else {
            None
        };
        let y_width = match v {
            Variant::EncoderOnly => 2 * hidden,
            Variant::UserConcat => hidden + dim,
            _ => state,
        };
        let w_loc = store.init("w_loc", y_width, n_loc, Init::Xavier, &mut rng)?;

        Ok(Model {
            config,
            vocab,
            tables,
            store,
            weights: ModelWeights {
                w_l,
                w_g,
                w_t,
                w_u,
                enc_o,
                enc_d,
                w_a,
                w_loc,
            },
        })
    }

    pub fn n_locations(&self) -> usize {
        self.vocab.n_locations
    }

    /// Width of an encoded state.
    pub fn state_width(&self) -> usize {
        match self.config.variant {
            Variant::DecoderOnly => self.config.dim,
            _ => self.config.hidden,
        }
    }

    fn query_width(&self) -> usize {
        if self.config.variant.personalized_attention() {
            3 * self.config.dim
        } else {
            2 * self.config.dim
        }
    }

    fn check_loc(&self, loc: usize) -> Result<()> {
        ensure!(loc < self.n_locations(), "location {loc} out of range");
        Ok(())
    }

    fn visit_nodes(&self, g: &mut Graph, enc: &Encoder, v: Visit) -> Result<VisitNodes> {
        self.check_loc(v.loc)?;
        let loc = g.embed(self.weights.w_l, v.loc)?;
        Ok(match enc {
            Encoder::SpatioTemporal(_) => {
                let (w_g, w_t) = (self.weights.w_g.unwrap(), self.weights.w_t.unwrap());
                let geo = g.embed(w_g, self.vocab.loc_geohash[v.loc])?;
                let slot = g.embed(w_t, self.vocab.slot(v.ts).index())?;
                let ds = g.leaf(self.tables.spatial_row(v.loc).to_vec());
                let dt = g.leaf(self.tables.temporal_row(v.loc).to_vec());
                VisitNodes::St(StInputNodes {
                    loc,
                    geo,
                    slot,
                    ds,
                    dt,
                })
            }
            _ => VisitNodes::Loc(loc),
        })
    }

    fn run_encoder(&self, g: &mut Graph, enc: &Encoder, seq: &[Visit]) -> Result<Vec<NodeId>> {
        let inputs = seq
            .iter()
            .map(|&v| self.visit_nodes(g, enc, v))
            .collect::<Result<Vec<_>>>()?;
        match enc {
            Encoder::SpatioTemporal(w) => {
                let xs: Vec<_> = inputs
                    .iter()
                    .map(|x| match x {
                        VisitNodes::St(n) => *n,
                        VisitNodes::Loc(_) => unreachable!(),
                    })
                    .collect();
                w.encode(g, &xs)
            }
            Encoder::Lstm(w) => {
                let xs: Vec<_> = inputs
                    .iter()
                    .map(|x| match x {
                        VisitNodes::Loc(n) => *n,
                        VisitNodes::St(n) => n.loc,
                    })
                    .collect();
                w.encode(g, &xs)
            }
            Encoder::Identity => Ok(inputs
                .iter()
                .map(|x| match x {
                    VisitNodes::Loc(n) => *n,
                    VisitNodes::St(n) => n.loc,
                })
                .collect()),
        }
    }

    /// Runs the origin sequence through the origin encoder and the
    /// destination sequence through the destination encoder.
    pub(crate) fn encode_nodes(&self, g: &mut Graph, origins: &[Visit], dests: &[Visit]) -> Result<EncodedNodes> {
        ensure!(
            origins.len() == dests.len(),
            "origin sequence of {} against destination sequence of {}",
            origins.len(),
            dests.len()
        );
        Ok(EncodedNodes {
            origin: self.run_encoder(g, &self.weights.enc_o, origins)?,
            dest: self.run_encoder(g, &self.weights.enc_d, dests)?,
        })
    }

    /// Forward-only encoding: the origin states followed by the
    /// destination states, each tagged with role and 1-based timestep.
    pub fn encode_user(&self, origins: &[Visit], dests: &[Visit]) -> Result<Vec<CachedState>> {
        let mut g = Graph::new(&self.store);
        let enc = self.encode_nodes(&mut g, origins, dests)?;
        let tag = |nodes: &[NodeId], seq: &[Visit], role: Role| {
            nodes
                .iter()
                .zip(seq)
                .enumerate()
                .map(|(k, (&n, v))| CachedState {
                    h: g.value(n).to_vec(),
                    role,
                    step: k + 1,
                    loc: v.loc,
                })
                .collect::<Vec<_>>()
        };
        let mut out = tag(&enc.origin, origins, Role::Origin);
        out.extend(tag(&enc.dest, dests, Role::Destination));
        Ok(out)
    }

    pub(crate) fn user_node(&self, g: &mut Graph, user: UserRef) -> Result<Option<NodeId>> {
        let Some(w_u) = self.weights.w_u else {
            return Ok(None);
        };
        Ok(Some(match user {
            UserRef::Known(u) => {
                ensure!(u < self.vocab.n_users, "user {u} out of range");
                g.embed(w_u, u)?
            }
            UserRef::Cold => g.leaf(self.mean_user_embedding()),
        }))
    }

    /// Mean of the trained user-embedding rows; the cold-start user vector.
    pub fn mean_user_embedding(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.config.dim];
        if let Some(w_u) = self.weights.w_u {
            let t = self.store.value(w_u);
            for r in 0..t.rows() {
                for (m, v) in mean.iter_mut().zip(t.row(r)) {
                    *m += v;
                }
            }
            if t.rows() > 0 {
                mean.iter_mut().for_each(|m| *m /= t.rows() as f64);
            }
        }
        mean
    }

    /// Projects each state through the state rows of `W_A`.
    pub(crate) fn attention_keys(&self, g: &mut Graph, states: &[NodeId]) -> Result<Vec<NodeId>> {
        let Some(w_a) = self.weights.w_a else {
            return Ok(Vec::new());
        };
        let off = self.query_width();
        states.iter().map(|&h| g.affine(&[(w_a, off, h)], None)).collect()
    }

    /// Decoder output `y` for one query. Returns the attention node when
    /// the variant has one.
    pub(crate) fn decode(
        &self,
        g: &mut Graph,
        user: Option<NodeId>,
        origin: usize,
        prev_dest: usize,
        states: &[NodeId],
        keys: &[NodeId],
    ) -> Result<(NodeId, Option<NodeId>)> {
        self.check_loc(origin)?;
        self.check_loc(prev_dest)?;
        let v = self.config.variant;
        ensure!(v.has_attention(), "decode called on a variant without attention");
        let w_a = self.weights.w_a.unwrap();
        let o = g.embed(self.weights.w_l, origin)?;
        let d = g.embed(self.weights.w_l, prev_dest)?;
        let q = if v.personalized_attention() {
            let u = user.ok_or_else(|| Error::Contract("personalized attention without a user".into()))?;
            g.concat(&[u, o, d])
        } else {
            g.concat(&[o, d])
        };
        let q = g.affine(&[(w_a, 0, q)], None)?;
        let att = g.attention(q, keys, states, self.config.leaky_slope)?;
        let y = match v {
            Variant::UserAdd => g.add(att, user.unwrap())?,
            Variant::UserConcat => g.concat(&[att, user.unwrap()]),
            _ => att,
        };
        Ok((y, Some(att)))
    }

    pub(crate) fn logits(&self, g: &mut Graph, y: NodeId) -> Result<NodeId> {
        g.affine(&[(self.weights.w_loc, 0, y)], None)
    }

    /// Softmax over `W_loc y` for a concrete decoder output.
    pub fn predict_distribution(&self, y: &[f64]) -> Result<Vec<f64>> {
        let w = self.store.value(self.weights.w_loc);
        Ok(nn::softmax(&nn::linear(w, y, None)?))
    }
}
