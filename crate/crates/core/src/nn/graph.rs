//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass together with the
//! intermediate values its backward rule needs. Parameters are never copied
//! into the tape; ops refer to them by [`ParamId`] and their gradients are
//! accumulated into a [`Gradients`] set aligned with the store.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops::{
    bn_layout, channel_stats, conv2d_single, conv2d_single_backward, conv_dims, dropout_mask,
    lstm_backward_raw, lstm_dims, lstm_forward_raw, maxpool2_raw, ConvDims, LstmCache, LstmWeights,
    Mode, BN_EPS, PROB_FLOOR,
};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Parameter ids of one LSTM cell, gates in f, i, C, o order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmIds {
    pub w: [ParamId; 4],
    pub b: [ParamId; 4],
}

impl LstmIds {
    pub fn all(&self) -> [ParamId; 8] {
        let [a, b, c, d] = self.w;
        let [e, f, g, h] = self.b;
        [a, b, c, d, e, f, g, h]
    }
}

/// Parameter ids of one batch-norm layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchNormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

/// Batch statistics observed in train mode, to be folded into the running
/// estimates after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate {
    pub ids: BatchNormIds,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Embedding {
        table: ParamId,
        indices: Vec<usize>,
        frozen_row: Option<usize>,
    },
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    LstmStep {
        cell: LstmIds,
        x: NodeId,
        state: Option<NodeId>,
        cache: Box<LstmCache>,
    },
    Conv2d {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        dims: ConvDims,
        batch: usize,
    },
    MaxPool2 {
        x: NodeId,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: NodeId,
        ids: BatchNormIds,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        layout: (usize, usize, usize),
        batch_stats: bool,
    },
    Relu {
        x: NodeId,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    Row {
        x: NodeId,
        index: usize,
    },
    Reshape {
        x: NodeId,
    },
    SoftmaxXent {
        logits: NodeId,
        gold: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
    bn_updates: Vec<BnUpdate>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().expect("tensors have rank >= 1");
    (shape.iter().product::<usize>() / cols, cols)
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

impl<'p> Graph<'p> {
    /// `seed` drives dropout masks; replaying a pass with the same seed
    /// replays the same masks.
    pub fn new(params: &'p ParamStore, mode: Mode, seed: u64) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        debug_assert!(value.is_finite() || matches!(op, Op::Input));
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn param(&self, id: ParamId) -> &'p Tensor {
        self.params.get(id)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Looks up rows of an embedding table, giving `[indices.len(), dim]`.
    /// `frozen_row` receives no gradient (used for padding).
    pub fn embedding(
        &mut self,
        table: ParamId,
        indices: &[usize],
        frozen_row: Option<usize>,
    ) -> Result<NodeId> {
        let t = self.param(table);
        let [v, d] = *t.shape() else {
            return Err(Error::Shape(format!(
                "embedding table {:?} is not 2-D",
                t.shape()
            )));
        };
        if indices.is_empty() {
            return Err(Error::Empty("embedding lookup".into()));
        }
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(Error::VocabularyMismatch(format!(
                    "index {i} outside embedding table of {v} rows"
                )));
            }
            out.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![indices.len(), d], out)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
                frozen_row,
            },
        ))
    }

    /// `y = x W^T + b` over the last axis; `W` is `[out, in]`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let wt = self.param(w);
        let bt = self.param(b);
        let [out_dim, in_dim] = *wt.shape() else {
            return Err(Error::Shape(format!(
                "linear weight {:?} is not 2-D",
                wt.shape()
            )));
        };
        if bt.shape() != [out_dim] {
            return Err(Error::Shape(format!(
                "linear bias {:?} for {out_dim} outputs",
                bt.shape()
            )));
        }
        let xv = self.value(x);
        let (rows, cols) = rows_cols(xv.shape());
        if cols != in_dim {
            return Err(Error::Shape(format!(
                "linear expects {in_dim} inputs, got {:?}",
                xv.shape()
            )));
        }
        let mut out = Vec::with_capacity(rows * out_dim);
        for r in 0..rows {
            let xr = &xv.data()[r * cols..(r + 1) * cols];
            for o in 0..out_dim {
                let wr = &wt.data()[o * in_dim..(o + 1) * in_dim];
                out.push(wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() + bt.data()[o]);
            }
        }
        let value = Tensor::new(vec![rows, out_dim], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// One LSTM step. `state` is the `[1, 2h]` output of the previous step
    /// (hidden then cell) or `None` for the zero state. Returns the new
    /// state node.
    pub fn lstm_step(
        &mut self,
        cell: &LstmIds,
        x: NodeId,
        state: Option<NodeId>,
    ) -> Result<NodeId> {
        let ws = cell.w.map(|id| self.param(id));
        let bs = cell.b.map(|id| self.param(id));
        let (h, d) = lstm_dims(ws.map(Tensor::shape), bs.map(Tensor::shape))?;
        let xv = self.value(x).data();
        if xv.len() != d {
            return Err(Error::Shape(format!(
                "LSTM input has {} values, cell expects {d}",
                xv.len()
            )));
        }
        let zeros = vec![0.0; 2 * h];
        let sv = match state {
            Some(s) => {
                let v = self.value(s).data();
                if v.len() != 2 * h {
                    return Err(Error::Shape(format!(
                        "LSTM state has {} values, expected {}",
                        v.len(),
                        2 * h
                    )));
                }
                v
            }
            None => &zeros,
        };
        let wts = LstmWeights {
            w: ws.map(Tensor::data),
            b: bs.map(Tensor::data),
        };
        let cache = lstm_forward_raw(&wts, h, xv, &sv[..h], &sv[h..]);
        let mut out = cache.h.clone();
        out.extend_from_slice(&cache.c);
        let value = Tensor::row(out);
        Ok(self.push(
            value,
            Op::LstmStep {
                cell: *cell,
                x,
                state,
                cache: Box::new(cache),
            },
        ))
    }

    /// Hidden half of an LSTM state node.
    pub fn lstm_hidden(&mut self, state: NodeId) -> Result<NodeId> {
        let len = self.value(state).len() / 2;
        self.slice(state, 0, len)
    }

    /// Runs `cell` over the given input nodes from zero state and returns the
    /// last hidden state `[1, h]`.
    pub fn lstm_sequence(&mut self, cell: &LstmIds, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Empty("LSTM input sequence".into()));
        }
        let mut state = None;
        for &x in xs {
            state = Some(self.lstm_step(cell, x, state)?);
        }
        self.lstm_hidden(state.expect("non-empty"))
    }

    /// Valid 2-D convolution over `[N, C, H, W]`.
    pub fn conv2d(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let xv = self.value(x);
        let [n, c, h, wd] = *xv.shape() else {
            return Err(Error::Shape(format!(
                "conv input {:?} is not [N, C, H, W]",
                xv.shape()
            )));
        };
        let dims = conv_dims(&[c, h, wd], self.param(w).shape(), self.param(b).shape())?;
        let filt = self.param(w).data();
        let bias = self.param(b).data();
        let mut out = vec![0.0; n * dims.out_len()];
        out.par_chunks_mut(dims.out_len())
            .zip(xv.data().par_chunks(dims.in_len()))
            .for_each(|(o, xi)| conv2d_single(&dims, xi, filt, bias, o));
        let value = Tensor::new(vec![n, dims.f, dims.out_h(), dims.out_w()], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                dims,
                batch: n,
            },
        ))
    }

    /// 2x2 stride-2 max pooling over the last two axes.
    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let shape = xv.shape();
        if shape.len() < 3 {
            return Err(Error::Shape(format!(
                "maxpool input {shape:?} needs at least 3 axes"
            )));
        }
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        if h < 2 || w < 2 {
            return Err(Error::Shape(format!(
                "maxpool input {h}x{w} is smaller than 2x2"
            )));
        }
        let planes = xv.len() / (h * w);
        let (out, argmax) = maxpool2_raw(xv.data(), planes, h, w);
        let mut out_shape = shape.to_vec();
        let r = out_shape.len();
        out_shape[r - 2] = h / 2;
        out_shape[r - 1] = w / 2;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::MaxPool2 { x, argmax }))
    }

    /// Batch normalization over axis 1. Train mode normalizes with batch
    /// statistics and records them for the running-average update.
    pub fn batch_norm(&mut self, x: NodeId, ids: BatchNormIds) -> Result<NodeId> {
        let xv = self.value(x);
        let (n, c, s) = bn_layout(xv.shape())?;
        let gamma = self.param(ids.gamma).data();
        let beta = self.param(ids.beta).data();
        if gamma.len() != c || beta.len() != c {
            return Err(Error::Shape(format!(
                "batch norm has {} channels, input {c}",
                gamma.len()
            )));
        }
        let batch_stats = self.mode == Mode::Train;
        let (mean, var) = if batch_stats {
            if n < 2 {
                return Err(Error::InvalidArgument(
                    "batch norm in train mode needs a batch of at least 2".into(),
                ));
            }
            channel_stats(xv.data(), n, c, s)
        } else {
            (
                self.param(ids.running_mean).data().to_vec(),
                self.param(ids.running_var).data().to_vec(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = xv.data().to_vec();
        let mut out = vec![0.0; xhat.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * s;
                for k in off..off + s {
                    xhat[k] = (xhat[k] - mean[ch]) * inv_std[ch];
                    out[k] = gamma[ch] * xhat[k] + beta[ch];
                }
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        if batch_stats {
            self.bn_updates.push(BnUpdate {
                ids,
                mean,
                var,
                count: n * s,
            });
        }
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                ids,
                xhat,
                inv_std,
                layout: (n, c, s),
                batch_stats,
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Relu { x })
    }

    /// Inverted dropout; the identity in eval mode or when `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let len = self.value(x).len();
        let mask = dropout_mask(len, p, &mut self.rng);
        let xv = self.value(x);
        let out = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    /// Concatenates 2-D nodes with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| rows_cols(self.value(p).shape()))
            .collect();
        let rows = dims
            .first()
            .map(|d| d.0)
            .ok_or_else(|| Error::Empty("concat".into()))?;
        if dims.iter().any(|d| d.0 != rows) {
            return Err(Error::Shape(format!("concat row counts differ: {dims:?}")));
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &(_, cols)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.value(p).data()[r * cols..(r + 1) * cols]);
            }
        }
        let value = Tensor::new(vec![rows, total], out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Columns `[start, start + len)` of a 2-D node.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, cols) = rows_cols(self.value(x).shape());
        if start + len > cols || len == 0 {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) of {cols} columns",
                start + len
            )));
        }
        let data = self.value(x).data();
        let out = (0..rows)
            .flat_map(|r| {
                data[r * cols + start..r * cols + start + len]
                    .iter()
                    .copied()
            })
            .collect();
        let value = Tensor::new(vec![rows, len], out)?;
        Ok(self.push(value, Op::Slice { x, start, len }))
    }

    /// Row `index` of a 2-D node as a `[1, cols]` node.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let (rows, cols) = rows_cols(self.value(x).shape());
        if index >= rows {
            return Err(Error::Shape(format!("row {index} of {rows}")));
        }
        let value = Tensor::row(self.value(x).data()[index * cols..(index + 1) * cols].to_vec());
        Ok(self.push(value, Op::Row { x, index }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Mean softmax cross-entropy of `[N, C]` logits against `gold`; a
    /// scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, gold: &[usize]) -> Result<NodeId> {
        let (rows, cols) = rows_cols(self.value(logits).shape());
        if gold.len() != rows {
            return Err(Error::Shape(format!(
                "{} gold labels for {rows} rows",
                gold.len()
            )));
        }
        let data = self.value(logits).data();
        let mut probs = Vec::with_capacity(rows * cols);
        let mut loss = 0.0;
        for (r, &g) in gold.iter().enumerate() {
            if g >= cols {
                return Err(Error::InvalidArgument(format!(
                    "gold class {g} out of range for {cols} classes"
                )));
            }
            let p = super::ops::softmax(&data[r * cols..(r + 1) * cols]);
            loss -= p[g].max(PROB_FLOOR).ln();
            probs.extend(p);
        }
        let value = Tensor::vector(vec![loss / rows as f64]);
        Ok(self.push(
            value,
            Op::SoftmaxXent {
                logits,
                gold: gold.to_vec(),
                probs,
            },
        ))
    }

    /// Fingerprint of every ReLU activation pattern and max-pool argmax.
    /// Two passes with equal signatures lie on the same smooth piece of the
    /// network function.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for v in self.value(*x).data() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool2 { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_with(loss, vec![1.0])
    }

    /// Back-propagates an explicit upstream gradient for node `out`.
    pub fn backward_with(&self, out: NodeId, upstream: Vec<f64>) -> Result<Gradients> {
        if out.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward);
        }
        if upstream.len() != self.value(out).len() {
            return Err(Error::Shape("upstream gradient length mismatch".into()));
        }
        let params = self.params;
        let mut pg = Gradients::zeros_like(params);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(upstream);

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Embedding {
                    table,
                    indices,
                    frozen_row,
                } => {
                    let shape = params.get(*table).shape();
                    let d = shape[1];
                    let dt = pg.slot(*table, shape).data_mut();
                    for (k, &i) in indices.iter().enumerate() {
                        if Some(i) == *frozen_row {
                            continue;
                        }
                        add_into(&mut dt[i * d..(i + 1) * d], &g[k * d..(k + 1) * d]);
                    }
                }
                Op::Linear { x, w, b } => {
                    let wt = params.get(*w);
                    let (out_dim, in_dim) = (wt.shape()[0], wt.shape()[1]);
                    let xv = self.value(*x).data();
                    let rows = xv.len() / in_dim;
                    {
                        let dw = pg.slot(*w, wt.shape()).data_mut();
                        for r in 0..rows {
                            let xr = &xv[r * in_dim..(r + 1) * in_dim];
                            for o in 0..out_dim {
                                let go = g[r * out_dim + o];
                                if go != 0.0 {
                                    for (dwv, xv) in
                                        dw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(xr)
                                    {
                                        *dwv += go * xv;
                                    }
                                }
                            }
                        }
                    }
                    {
                        let db = pg.slot(*b, &[out_dim]).data_mut();
                        for r in 0..rows {
                            add_into(db, &g[r * out_dim..(r + 1) * out_dim]);
                        }
                    }
                    let dx = acc(&mut grads, *x, xv.len());
                    for r in 0..rows {
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            if go != 0.0 {
                                let wr = &wt.data()[o * in_dim..(o + 1) * in_dim];
                                for (dxv, wv) in dx[r * in_dim..(r + 1) * in_dim].iter_mut().zip(wr)
                                {
                                    *dxv += go * wv;
                                }
                            }
                        }
                    }
                }
                Op::LstmStep {
                    cell,
                    x,
                    state,
                    cache,
                } => {
                    let h = cache.h.len();
                    let wts = LstmWeights {
                        w: cell.w.map(|id| params.get(id).data()),
                        b: cell.b.map(|id| params.get(id).data()),
                    };
                    for id in cell.all() {
                        pg.slot(id, params.get(id).shape());
                    }
                    let mut slots = pg.many_mut(&cell.all());
                    let (wslots, bslots) = slots.split_at_mut(4);
                    let mut dw: [&mut [f64]; 4] = wslots
                        .iter_mut()
                        .map(|t| t.data_mut())
                        .collect::<Vec<_>>()
                        .try_into()
                        .expect("four gates");
                    let mut db: [&mut [f64]; 4] = bslots
                        .iter_mut()
                        .map(|t| t.data_mut())
                        .collect::<Vec<_>>()
                        .try_into()
                        .expect("four gates");
                    let (dh_prev, dc_prev, dx) =
                        lstm_backward_raw(&wts, cache, &g[..h], &g[h..], &mut dw, &mut db);
                    add_into(acc(&mut grads, *x, dx.len()), &dx);
                    if let Some(s) = state {
                        let ds = acc(&mut grads, *s, 2 * h);
                        add_into(&mut ds[..h], &dh_prev);
                        add_into(&mut ds[h..], &dc_prev);
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    dims,
                    batch,
                } => {
                    let filt = params.get(*w).data();
                    let xv = self.value(*x).data();
                    let (in_len, out_len) = (dims.in_len(), dims.out_len());
                    let n_filt = filt.len();
                    // per-example partials, summed in example order
                    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..*batch)
                        .into_par_iter()
                        .map(|n| {
                            let mut df = vec![0.0; n_filt];
                            let mut dbias = vec![0.0; dims.f];
                            let dx = conv2d_single_backward(
                                dims,
                                &xv[n * in_len..(n + 1) * in_len],
                                filt,
                                &g[n * out_len..(n + 1) * out_len],
                                &mut df,
                                &mut dbias,
                            );
                            (df, dbias, dx)
                        })
                        .collect();
                    let wshape = params.get(*w).shape();
                    let dxs = acc(&mut grads, *x, xv.len());
                    for (n, (_, _, dx)) in partials.iter().enumerate() {
                        add_into(&mut dxs[n * in_len..(n + 1) * in_len], dx);
                    }
                    let dw = pg.slot(*w, wshape).data_mut();
                    for (df, _, _) in &partials {
                        add_into(dw, df);
                    }
                    let db = pg.slot(*b, &[dims.f]).data_mut();
                    for (_, dbias, _) in &partials {
                        add_into(db, dbias);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let dx = acc(&mut grads, *x, self.value(*x).len());
                    for (gv, &src) in g.iter().zip(argmax) {
                        dx[src] += gv;
                    }
                }
                Op::BatchNorm {
                    x,
                    ids,
                    xhat,
                    inv_std,
                    layout: (n, c, s),
                    batch_stats,
                } => {
                    let (n, c, s) = (*n, *c, *s);
                    let gamma = params.get(ids.gamma).data();
                    let m = (n * s) as f64;
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut sum_dxhat = vec![0.0; c];
                    let mut sum_dxhat_xhat = vec![0.0; c];
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * s;
                            for k in off..off + s {
                                dgamma[ch] += g[k] * xhat[k];
                                dbeta[ch] += g[k];
                                let dxh = g[k] * gamma[ch];
                                sum_dxhat[ch] += dxh;
                                sum_dxhat_xhat[ch] += dxh * xhat[k];
                            }
                        }
                    }
                    let dx = acc(&mut grads, *x, n * c * s);
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * s;
                            for k in off..off + s {
                                let dxh = g[k] * gamma[ch];
                                dx[k] += if *batch_stats {
                                    inv_std[ch] / m
                                        * (m * dxh - sum_dxhat[ch] - xhat[k] * sum_dxhat_xhat[ch])
                                } else {
                                    dxh * inv_std[ch]
                                };
                            }
                        }
                    }
                    add_into(pg.slot(ids.gamma, &[c]).data_mut(), &dgamma);
                    add_into(pg.slot(ids.beta, &[c]).data_mut(), &dbeta);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let dx = acc(&mut grads, *x, xv.len());
                    for ((d, gv), v) in dx.iter_mut().zip(&g).zip(xv) {
                        if *v > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx = acc(&mut grads, *x, mask.len());
                    for ((d, gv), m) in dx.iter_mut().zip(&g).zip(mask) {
                        *d += gv * m;
                    }
                }
                Op::Concat { parts } => {
                    let total = node.value.shape()[1];
                    let rows = node.value.shape()[0];
                    let mut col = 0;
                    for &p in parts {
                        let (_, cols) = rows_cols(self.value(p).shape());
                        let dp = acc(&mut grads, p, rows * cols);
                        for r in 0..rows {
                            add_into(
                                &mut dp[r * cols..(r + 1) * cols],
                                &g[r * total + col..r * total + col + cols],
                            );
                        }
                        col += cols;
                    }
                }
                Op::Slice { x, start, len } => {
                    let (rows, cols) = rows_cols(self.value(*x).shape());
                    let dx = acc(&mut grads, *x, rows * cols);
                    for r in 0..rows {
                        add_into(
                            &mut dx[r * cols + start..r * cols + start + len],
                            &g[r * len..(r + 1) * len],
                        );
                    }
                }
                Op::Row { x, index } => {
                    let total = self.value(*x).len();
                    let cols = g.len();
                    let dx = acc(&mut grads, *x, total);
                    add_into(&mut dx[index * cols..(index + 1) * cols], &g);
                }
                Op::Reshape { x } => {
                    add_into(acc(&mut grads, *x, g.len()), &g);
                }
                Op::SoftmaxXent {
                    logits,
                    gold,
                    probs,
                } => {
                    let rows = gold.len();
                    let cols = probs.len() / rows;
                    let scale = g[0] / rows as f64;
                    let dl = acc(&mut grads, *logits, probs.len());
                    for (r, &gc) in gold.iter().enumerate() {
                        for c in 0..cols {
                            let onehot = if c == gc { 1.0 } else { 0.0 };
                            dl[r * cols + c] += scale * (probs[r * cols + c] - onehot);
                        }
                    }
                }
            }
        }
        Ok(pg)
    }
}

/// Folds recorded batch statistics into the running estimates with
/// momentum `momentum`.
pub fn apply_bn_updates(params: &mut ParamStore, updates: &[BnUpdate], momentum: f64) {
    for u in updates {
        let correction = if u.count > 1 {
            u.count as f64 / (u.count - 1) as f64
        } else {
            1.0
        };
        let rm = params.get_mut(u.ids.running_mean).data_mut();
        for (r, m) in rm.iter_mut().zip(&u.mean) {
            *r = momentum * *r + (1.0 - momentum) * m;
        }
        let rv = params.get_mut(u.ids.running_var).data_mut();
        for (r, v) in rv.iter_mut().zip(&u.var) {
            *r = momentum * *r + (1.0 - momentum) * v * correction;
        }
    }
}


#[cfg(test)]
pub(crate) fn node_id(i: usize) -> NodeId {
    NodeId(i)
}
