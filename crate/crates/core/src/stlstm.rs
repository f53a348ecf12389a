//! LSTM and the spatio-temporal LSTM cell.
//!
//! The spatio-temporal cell keeps the standard gates and cell state and adds
//! two more cell states: a spatial one driven by the geohash embedding and
//! the distance-interval row, and a temporal one driven by the timeslot
//! embedding and the duration-interval row. The three cell states are
//! concatenated, fused by `W_h`, squashed by `tanh` and gated by the
//! standard output gate. The extra states have no output gates of their own.

use rand::Rng;

use crate::error::{ensure, Result};
use crate::nn::{Graph, Init, NodeId, ParamId, ParamStore};

/// Input gate, forget gate, output gate and cell input of a standard LSTM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmWeights {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_dim: usize,
    pub hidden: usize,
}

const GATES: [&str; 4] = ["i", "f", "o", "c"];
const BRANCH_GATES: [&str; 3] = ["i", "f", "c"];

impl LstmWeights {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = Vec::new();
        let mut u = Vec::new();
        let mut b = Vec::new();
        for g in GATES {
            w.push(store.init(format!("{prefix}.w_{g}"), input_dim, hidden, Init::Xavier, rng)?);
            u.push(store.init(format!("{prefix}.u_{g}"), hidden, hidden, Init::Xavier, rng)?);
            b.push(store.init(format!("{prefix}.b_{g}"), 1, hidden, Init::Zeros, rng)?);
        }
        Ok(LstmWeights {
            w: [w[0], w[1], w[2], w[3]],
            u: [u[0], u[1], u[2], u[3]],
            b: [b[0], b[1], b[2], b[3]],
            input_dim,
            hidden,
        })
    }

    fn gate(&self, g: &mut Graph, k: usize, x: NodeId, h: NodeId) -> Result<NodeId> {
        g.affine(&[(self.w[k], 0, x), (self.u[k], 0, h)], Some(self.b[k]))
    }

    /// Returns `(h, c, o)`, where `o` is the output gate.
    fn gates(&self, g: &mut Graph, x: NodeId, h_prev: NodeId, c_prev: NodeId) -> Result<(NodeId, NodeId)> {
        let i = self.gate(g, 0, x, h_prev)?;
        let i = g.sigmoid(i);
        let f = self.gate(g, 1, x, h_prev)?;
        let f = g.sigmoid(f);
        let o = self.gate(g, 2, x, h_prev)?;
        let o = g.sigmoid(o);
        let cand = self.gate(g, 3, x, h_prev)?;
        let cand = g.tanh(cand);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        Ok((c, o))
    }

    /// One standard LSTM step; returns `(h, c)`.
    pub fn step(&self, g: &mut Graph, x: NodeId, h_prev: NodeId, c_prev: NodeId) -> Result<(NodeId, NodeId)> {
        ensure!(
            g.value(x).len() == self.input_dim,
            "lstm input width {} against {}",
            g.value(x).len(),
            self.input_dim
        );
        let (c, o) = self.gates(g, x, h_prev, c_prev)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs from a zero state; one hidden state per input.
    pub fn encode(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut h = g.leaf(vec![0.0; self.hidden]);
        let mut c = g.leaf(vec![0.0; self.hidden]);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(g, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Gates of one extra cell state: `[i, f, c]` each with a local-view
/// projection `w`, a global-view projection `v` and a recurrent `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchWeights {
    pub w: [ParamId; 3],
    pub v: [ParamId; 3],
    pub u: [ParamId; 3],
    pub b: [ParamId; 3],
}

impl BranchWeights {
    fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dims: StDims,
        rng: &mut R,
    ) -> Result<Self> {
        let mut ids: [Vec<ParamId>; 4] = Default::default();
        for g in BRANCH_GATES {
            ids[0].push(store.init(format!("{prefix}.w_{g}"), dims.dim, dims.hidden, Init::Xavier, rng)?);
            ids[1].push(store.init(format!("{prefix}.v_{g}"), dims.n_locations, dims.hidden, Init::Xavier, rng)?);
            ids[2].push(store.init(format!("{prefix}.u_{g}"), dims.hidden, dims.hidden, Init::Xavier, rng)?);
            ids[3].push(store.init(format!("{prefix}.b_{g}"), 1, dims.hidden, Init::Zeros, rng)?);
        }
        let arr = |v: &Vec<ParamId>| [v[0], v[1], v[2]];
        Ok(BranchWeights {
            w: arr(&ids[0]),
            v: arr(&ids[1]),
            u: arr(&ids[2]),
            b: arr(&ids[3]),
        })
    }

    fn cell(&self, g: &mut Graph, local: NodeId, global: NodeId, h_prev: NodeId, c_prev: NodeId) -> Result<NodeId> {
        let mut act = [local; 3];
        for k in 0..3 {
            let z = g.affine(
                &[(self.w[k], 0, local), (self.v[k], 0, global), (self.u[k], 0, h_prev)],
                Some(self.b[k]),
            )?;
            act[k] = if k == 2 { g.tanh(z) } else { g.sigmoid(z) };
        }
        let keep = g.mul(act[1], c_prev)?;
        let write = g.mul(act[0], act[2])?;
        g.add(keep, write)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StDims {
    pub dim: usize,
    pub hidden: usize,
    pub n_locations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StLstmWeights {
    pub base: LstmWeights,
    pub spatial: BranchWeights,
    pub temporal: BranchWeights,
    /// `(3 * hidden) x hidden` fusion of `c || c_s || c_t`.
    pub w_h: ParamId,
    pub dims: StDims,
}

/// Graph nodes for one timestep's input.
#[derive(Debug, Clone, Copy)]
pub struct StInputNodes {
    pub loc: NodeId,
    pub geo: NodeId,
    pub slot: NodeId,
    pub ds: NodeId,
    pub dt: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct StStateNodes {
    pub h: NodeId,
    pub c: NodeId,
    pub c_s: NodeId,
    pub c_t: NodeId,
}

impl StLstmWeights {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, dims: StDims, rng: &mut R) -> Result<Self> {
        let base = LstmWeights::register(store, prefix, dims.dim, dims.hidden, rng)?;
        let spatial = BranchWeights::register(store, &format!("{prefix}.spatial"), dims, rng)?;
        let temporal = BranchWeights::register(store, &format!("{prefix}.temporal"), dims, rng)?;
        let w_h = store.init(format!("{prefix}.w_h"), 3 * dims.hidden, dims.hidden, Init::Xavier, rng)?;
        Ok(StLstmWeights {
            base,
            spatial,
            temporal,
            w_h,
            dims,
        })
    }

    pub fn zero_state(&self, g: &mut Graph) -> StStateNodes {
        let z = g.leaf(vec![0.0; self.dims.hidden]);
        StStateNodes {
            h: z,
            c: z,
            c_s: z,
            c_t: z,
        }
    }

    pub fn step(&self, g: &mut Graph, prev: &StStateNodes, x: &StInputNodes) -> Result<StStateNodes> {
        let d = self.dims;
        for (n, want) in [(x.loc, d.dim), (x.geo, d.dim), (x.slot, d.dim), (x.ds, d.n_locations), (x.dt, d.n_locations)] {
            ensure!(g.value(n).len() == want, "st-lstm input width {} against {want}", g.value(n).len());
        }
        let (c, o) = self.base.gates(g, x.loc, prev.h, prev.c)?;
        let c_s = self.spatial.cell(g, x.geo, x.ds, prev.h, prev.c_s)?;
        let c_t = self.temporal.cell(g, x.slot, x.dt, prev.h, prev.c_t)?;
        let fused_in = g.concat(&[c, c_s, c_t]);
        let fused = g.affine(&[(self.w_h, 0, fused_in)], None)?;
        let fused = g.tanh(fused);
        let h = g.mul(o, fused)?;
        Ok(StStateNodes { h, c, c_s, c_t })
    }

    /// Runs from a zero state; one hidden state per input.
    pub fn encode(&self, g: &mut Graph, inputs: &[StInputNodes]) -> Result<Vec<NodeId>> {
        let mut s = self.zero_state(g);
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            s = self.step(g, &s, x)?;
            out.push(s.h);
        }
        Ok(out)
    }
}

/// Concrete input of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StLstmInput {
    pub l_emb: Vec<f64>,
    pub geo_emb: Vec<f64>,
    pub slot_emb: Vec<f64>,
    pub ds_vec: Vec<f64>,
    pub dt_vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StLstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub c_s: Vec<f64>,
    pub c_t: Vec<f64>,
}

impl StLstmState {
    pub fn zeros(hidden: usize) -> Self {
        StLstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            c_s: vec![0.0; hidden],
            c_t: vec![0.0; hidden],
        }
    }
}

fn input_nodes(g: &mut Graph, x: &StLstmInput) -> StInputNodes {
    StInputNodes {
        loc: g.leaf(x.l_emb.clone()),
        geo: g.leaf(x.geo_emb.clone()),
        slot: g.leaf(x.slot_emb.clone()),
        ds: g.leaf(x.ds_vec.clone()),
        dt: g.leaf(x.dt_vec.clone()),
    }
}

/// Forward-only single step on concrete values.
pub fn st_lstm_step(store: &ParamStore, w: &StLstmWeights, prev: &StLstmState, x: &StLstmInput) -> Result<StLstmState> {
    let hidden = w.dims.hidden;
    for v in [&prev.h, &prev.c, &prev.c_s, &prev.c_t] {
        ensure!(v.len() == hidden, "state width {} against {hidden}", v.len());
    }
    let mut g = Graph::new(store);
    let p = StStateNodes {
        h: g.leaf(prev.h.clone()),
        c: g.leaf(prev.c.clone()),
        c_s: g.leaf(prev.c_s.clone()),
        c_t: g.leaf(prev.c_t.clone()),
    };
    let xi = input_nodes(&mut g, x);
    let s = w.step(&mut g, &p, &xi)?;
    Ok(StLstmState {
        h: g.value(s.h).to_vec(),
        c: g.value(s.c).to_vec(),
        c_s: g.value(s.c_s).to_vec(),
        c_t: g.value(s.c_t).to_vec(),
    })
}

/// Forward-only encoding from a zero state.
pub fn st_lstm_encode(store: &ParamStore, w: &StLstmWeights, inputs: &[StLstmInput]) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new(store);
    let nodes: Vec<_> = inputs.iter().map(|x| input_nodes(&mut g, x)).collect();
    let hs = w.encode(&mut g, &nodes)?;
    Ok(hs.into_iter().map(|h| g.value(h).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: StDims = StDims {
        dim: 4,
        hidden: 6,
        n_locations: 10,
    };

    fn random_input(rng: &mut ChaCha8Rng, d: StDims) -> StLstmInput {
        let mut v = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>();
        StLstmInput {
            l_emb: v(d.dim, -1.0, 1.0),
            geo_emb: v(d.dim, -1.0, 1.0),
            slot_emb: v(d.dim, -1.0, 1.0),
            ds_vec: v(d.n_locations, 0.0, 1.0),
            dt_vec: v(d.n_locations, 0.0, 1.0),
        }
    }

    fn setup(seed: u64) -> (ParamStore, StLstmWeights, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w = StLstmWeights::register(&mut store, "enc", DIMS, &mut rng).unwrap();
        (store, w, rng)
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let (mut store, w, mut rng) = setup(1);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let x = random_input(&mut rng, DIMS);
        let s = st_lstm_step(&store, &w, &StLstmState::zeros(6), &x).unwrap();
        assert_eq!(s.h, vec![0.0; 6]);
        assert_eq!(s.c, vec![0.0; 6]);
        assert_eq!(s.c_s.len(), 6);
        assert_eq!(s.c_t.len(), 6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (store, w, mut rng) = setup(2);
        let mut x = random_input(&mut rng, DIMS);
        x.ds_vec.pop();
        assert!(st_lstm_step(&store, &w, &StLstmState::zeros(6), &x).is_err());
        let x = random_input(&mut rng, DIMS);
        assert!(st_lstm_step(&store, &w, &StLstmState::zeros(5), &x).is_err());
    }

    #[test]
    fn encode_lengths_and_causality() {
        let (store, w, mut rng) = setup(3);
        let xs: Vec<_> = (0..5).map(|_| random_input(&mut rng, DIMS)).collect();
        let hs = st_lstm_encode(&store, &w, &xs).unwrap();
        assert_eq!(hs.len(), 5);
        assert!(hs.iter().all(|h| h.len() == 6));
        for k in 1..=5 {
            assert_eq!(st_lstm_encode(&store, &w, &xs[..k]).unwrap(), hs[..k]);
        }
        let single = st_lstm_step(&store, &w, &StLstmState::zeros(6), &xs[0]).unwrap();
        assert_eq!(single.h, hs[0]);
        assert!(st_lstm_encode(&store, &w, &[]).unwrap().is_empty());
    }

    #[test]
    fn gradient_through_two_steps() {
        let (mut store, w, mut rng) = setup(4);
        let out = store.init("out", 6, 10, Init::Xavier, &mut rng).unwrap();
        let xs: Vec<_> = (0..2).map(|_| random_input(&mut rng, DIMS)).collect();
        let build = |g: &mut Graph| {
            let nodes: Vec<_> = xs.iter().map(|x| input_nodes(g, x)).collect();
            let hs = w.encode(g, &nodes).unwrap();
            let z = g.affine(&[(out, 0, hs[1])], None).unwrap();
            g.softmax_cross_entropy(z, 3).unwrap()
        };
        let grads = {
            let mut g = Graph::new(&store);
            let l = build(&mut g);
            g.backward(l).unwrap()
        };
        let r = grad_check(&mut store, &grads, |s| {
            let mut g = Graph::new(s);
            let l = build(&mut g);
            g.value(l)[0]
        }, 1e-5);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn gates_stay_in_unit_interval() {
        let (store, w, mut rng) = setup(5);
        let mut g = Graph::new(&store);
        let x = input_nodes(&mut g, &random_input(&mut rng, DIMS));
        let s0 = w.zero_state(&mut g);
        let s = w.step(&mut g, &s0, &x).unwrap();
        // |h| <= 1 since h = o * tanh(.) with o in (0, 1)
        assert!(g.value(s.h).iter().all(|v| v.abs() < 1.0));
    }
}
