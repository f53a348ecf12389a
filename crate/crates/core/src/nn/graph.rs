//! Reverse-mode tape over vector-valued nodes.
//!
//! Matrices only ever appear as parameters, so every node holds a flat
//! vector. Affine maps read their weights straight from the borrowed
//! [`ParamStore`]; gradients come back as a separate [`Gradients`] value
//! so the store stays immutable while a graph is alive.

use super::ops::{self, accumulate_rows, CE_CLIP};
use super::{ParamId, ParamStore};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Embed {
        param: ParamId,
        row: usize,
    },
    /// `sum_t x_t^T W_t[off_t..off_t + |x_t|] + b`
    Affine {
        terms: Vec<(ParamId, usize, NodeId)>,
        bias: Option<ParamId>,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    /// Per-dimension softmax over a set: `alpha_i = softmax_i(lrelu(q + k_i))`,
    /// output `sum_i alpha_i * v_i`.
    Attention {
        query: NodeId,
        keys: Vec<NodeId>,
        values: Vec<NodeId>,
        slope: f64,
        alphas: Vec<f64>,
    },
    SoftmaxCe {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    Mean(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Parameter gradients produced by [`Graph::backward`], indexed like the
/// store. `None` means the parameter was not touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads[id.index()].as_deref()
    }

    /// Gradient of one scalar, zero when untouched.
    pub fn scalar(&self, id: ParamId, i: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g[i])
    }

    /// Overwrites the gradient of one parameter.
    pub fn set(&mut self, id: ParamId, grad: Vec<f64>) -> Result<()> {
        let slot = &mut self.grads[id.index()];
        if let Some(old) = slot {
            ensure!(old.len() == grad.len(), "gradient length {} against {}", grad.len(), old.len());
        }
        *slot = Some(grad);
        Ok(())
    }

    /// Adds another gradient set into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    fn slot(&mut self, id: ParamId, store: &ParamStore) -> &mut Vec<f64> {
        self.grads[id.index()].get_or_insert_with(|| vec![0.0; store.value(id).len()])
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn embed(&mut self, param: ParamId, row: usize) -> Result<NodeId> {
        let table = self.store.value(param);
        let value = ops::embedding_lookup(table, row)?;
        Ok(self.push(value, Op::Embed { param, row }, true))
    }

    /// Affine map over one or more inputs. Each term `(W, offset, x)` reads
    /// rows `offset..offset + |x|` of `W`; all weights must share a column
    /// count, which is the output width.
    pub fn affine(&mut self, terms: &[(ParamId, usize, NodeId)], bias: Option<ParamId>) -> Result<NodeId> {
        ensure!(!terms.is_empty() || bias.is_some(), "affine with no terms");
        let out = match (terms.first(), bias) {
            (Some(&(w, _, _)), _) => self.store.value(w).cols(),
            (None, Some(b)) => self.store.value(b).len(),
            (None, None) => unreachable!(),
        };
        let mut y = match bias {
            Some(b) => {
                let b = self.store.value(b);
                ensure!(b.len() == out, "bias length {} against output {out}", b.len());
                b.data().to_vec()
            }
            None => vec![0.0; out],
        };
        for &(w, off, x) in terms {
            let wt = self.store.value(w);
            let xv = &self.nodes[x.0].value;
            ensure!(
                wt.shape().len() == 2 && wt.cols() == out && off + xv.len() <= wt.rows(),
                "affine: weight `{}` {:?} cannot take rows {off}..{} to width {out}",
                self.store.name(w),
                wt.shape(),
                off + xv.len()
            );
            accumulate_rows(wt.data(), out, off, xv, &mut y);
        }
        Ok(self.push(
            y,
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            true,
        ))
    }

    fn same_len(&self, a: NodeId, b: NodeId) -> Result<()> {
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        ensure!(la == lb, "elementwise op on lengths {la} and {lb}");
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), g))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul(a, b), g))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| ops::sigmoid(x)).collect();
        let g = self.needs(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| x.tanh()).collect();
        let g = self.needs(a);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::with_capacity(parts.iter().map(|p| self.nodes[p.0].value.len()).sum());
        for p in parts {
            v.extend_from_slice(&self.nodes[p.0].value);
        }
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::Concat(parts.to_vec()), g)
    }

    pub fn attention(
        &mut self,
        query: NodeId,
        keys: &[NodeId],
        values: &[NodeId],
        slope: f64,
    ) -> Result<NodeId> {
        ensure!(!keys.is_empty(), "attention over an empty state set");
        ensure!(keys.len() == values.len(), "attention: {} keys, {} values", keys.len(), values.len());
        let d = self.nodes[query.0].value.len();
        for (&k, &v) in keys.iter().zip(values) {
            ensure!(
                self.nodes[k.0].value.len() == d && self.nodes[v.0].value.len() == d,
                "attention: state width differs from query width {d}"
            );
        }
        let n = keys.len();
        let q = &self.nodes[query.0].value;
        let mut alphas = vec![0.0; n * d];
        for (i, k) in keys.iter().enumerate() {
            let kv = &self.nodes[k.0].value;
            for j in 0..d {
                alphas[i * d + j] = ops::leaky_relu(q[j] + kv[j], slope);
            }
        }
        let mut y = vec![0.0; d];
        for j in 0..d {
            let max = (0..n).map(|i| alphas[i * d + j]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..n {
                let e = (alphas[i * d + j] - max).exp();
                alphas[i * d + j] = e;
                sum += e;
            }
            for i in 0..n {
                alphas[i * d + j] /= sum;
            }
        }
        for (i, v) in values.iter().enumerate() {
            let vv = &self.nodes[v.0].value;
            for j in 0..d {
                y[j] += alphas[i * d + j] * vv[j];
            }
        }
        let g = self.needs(query)
            || keys.iter().any(|&k| self.needs(k))
            || values.iter().any(|&v| self.needs(v));
        Ok(self.push(
            y,
            Op::Attention {
                query,
                keys: keys.to_vec(),
                values: values.to_vec(),
                slope,
                alphas,
            },
            g,
        ))
    }

    /// Per-state attention weights (`n x d`) of an attention node.
    pub fn attention_weights(&self, id: NodeId) -> Option<Vec<Vec<f64>>> {
        match &self.nodes[id.0].op {
            Op::Attention { alphas, keys, .. } => {
                let d = self.nodes[id.0].value.len();
                Some((0..keys.len()).map(|i| alphas[i * d..(i + 1) * d].to_vec()).collect())
            }
            _ => None,
        }
    }

    /// Softmax followed by `-ln(p[target] + CE_CLIP)`, a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let z = &self.nodes[logits.0].value;
        ensure!(target < z.len(), "target {target} outside {} classes", z.len());
        let probs = ops::softmax(z);
        let loss = -(probs[target] + CE_CLIP).ln();
        let g = self.needs(logits);
        Ok(self.push(
            vec![loss],
            Op::SoftmaxCe {
                logits,
                target,
                probs,
            },
            g,
        ))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        ensure!(!parts.is_empty(), "mean of nothing");
        let mut s = 0.0;
        for p in parts {
            ensure!(self.nodes[p.0].value.len() == 1, "mean over non-scalar node");
            s += self.nodes[p.0].value[0];
        }
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(vec![s / parts.len() as f64], Op::Mean(parts.to_vec()), g))
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        ensure!(self.nodes[loss.0].value.len() == 1, "backward from a non-scalar node");
        let store = self.store;
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let len_of = |id: NodeId| self.nodes[id.0].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Embed { param, row } => {
                    let cols = g.len();
                    let slot = out.slot(*param, store);
                    for (s, gv) in slot[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *s += gv;
                    }
                }
                Op::Affine { terms, bias } => {
                    if let Some(b) = bias {
                        for (s, gv) in out.slot(*b, store).iter_mut().zip(&g) {
                            *s += gv;
                        }
                    }
                    let cols = g.len();
                    for &(w, off, x) in terms {
                        let xv = &self.nodes[x.0].value;
                        let wslot = out.slot(w, store);
                        for (k, &xk) in xv.iter().enumerate() {
                            if xk == 0.0 {
                                continue;
                            }
                            let row = &mut wslot[(off + k) * cols..(off + k + 1) * cols];
                            for (r, gv) in row.iter_mut().zip(&g) {
                                *r += xk * gv;
                            }
                        }
                        if self.nodes[x.0].needs_grad {
                            let wd = store.value(w).data();
                            let gx = acc(&mut grads, x, xv.len());
                            for (k, gxk) in gx.iter_mut().enumerate() {
                                let row = &wd[(off + k) * cols..(off + k + 1) * cols];
                                *gxk += row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for id in [*a, *b] {
                        if self.nodes[id.0].needs_grad {
                            for (s, gv) in acc(&mut grads, id, g.len()).iter_mut().zip(&g) {
                                *s += gv;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].needs_grad {
                        let ga = acc(&mut grads, *a, g.len());
                        for i in 0..g.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = acc(&mut grads, *b, g.len());
                        for i in 0..g.len() {
                            gb[i] += g[i] * av[i];
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let l = len_of(p);
                        if self.nodes[p.0].needs_grad {
                            for (s, gv) in acc(&mut grads, p, l).iter_mut().zip(&g[start..start + l]) {
                                *s += gv;
                            }
                        }
                        start += l;
                    }
                }
                Op::Attention {
                    query,
                    keys,
                    values,
                    slope,
                    alphas,
                } => {
                    let d = g.len();
                    let y = &node.value;
                    let q = &self.nodes[query.0].value;
                    let mut gq = vec![0.0; d];
                    for (i, (&k, &v)) in keys.iter().zip(values).enumerate() {
                        let a = &alphas[i * d..(i + 1) * d];
                        let hv = &self.nodes[v.0].value;
                        if self.nodes[v.0].needs_grad {
                            let gv = acc(&mut grads, v, d);
                            for j in 0..d {
                                gv[j] += a[j] * g[j];
                            }
                        }
                        let kv = &self.nodes[k.0].value;
                        let mut gk = vec![0.0; d];
                        for j in 0..d {
                            let ds = a[j] * g[j] * (hv[j] - y[j]);
                            let dz = if q[j] + kv[j] > 0.0 { ds } else { slope * ds };
                            gk[j] = dz;
                            gq[j] += dz;
                        }
                        if self.nodes[k.0].needs_grad {
                            for (s, v) in acc(&mut grads, k, d).iter_mut().zip(&gk) {
                                *s += v;
                            }
                        }
                    }
                    if self.nodes[query.0].needs_grad {
                        for (s, v) in acc(&mut grads, *query, d).iter_mut().zip(&gq) {
                            *s += v;
                        }
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    target,
                    probs,
                } => {
                    let pt = probs[*target];
                    let scale = g[0] * pt / (pt + CE_CLIP);
                    let gl = acc(&mut grads, *logits, probs.len());
                    for (j, p) in probs.iter().enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        gl[j] += scale * (p - onehot);
                    }
                }
                Op::Mean(parts) => {
                    let s = g[0] / parts.len() as f64;
                    for &p in parts {
                        if self.nodes[p.0].needs_grad {
                            acc(&mut grads, p, 1)[0] += s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
