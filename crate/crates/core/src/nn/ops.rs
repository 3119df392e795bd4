//! Layer math shared by the standalone functions and the autodiff graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower clamp on probabilities inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate matrices `[h, h + d]` and biases `[h]` of one LSTM cell. The input to
/// every gate is the concatenation `[h_prev; x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        LstmCellParams {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Returns `(hidden, input)` after checking every tensor agrees.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let ws = [&self.w_f, &self.w_i, &self.w_c, &self.w_o];
        let bs = [&self.b_f, &self.b_i, &self.b_c, &self.b_o];
        lstm_dims(ws.map(Tensor::shape), bs.map(Tensor::shape))
    }

    fn weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            w: [
                self.w_f.data(),
                self.w_i.data(),
                self.w_c.data(),
                self.w_o.data(),
            ],
            b: [
                self.b_f.data(),
                self.b_i.data(),
                self.b_c.data(),
                self.b_o.data(),
            ],
        }
    }
}

pub(crate) fn lstm_dims(ws: [&[usize]; 4], bs: [&[usize]; 4]) -> Result<(usize, usize)> {
    let s = ws[0];
    if s.len() != 2 || s[1] <= s[0] {
        return Err(Error::Shape(format!(
            "LSTM gate matrix {s:?} is not [h, h+d]"
        )));
    }
    let (h, d) = (s[0], s[1] - s[0]);
    if ws.iter().any(|w| *w != s) || bs.iter().any(|b| *b != [h]) {
        return Err(Error::Shape("inconsistent LSTM gate shapes".into()));
    }
    Ok((h, d))
}

/// Borrowed gate parameters in f, i, C, o order.
pub(crate) struct LstmWeights<'a> {
    pub w: [&'a [f64]; 4],
    pub b: [&'a [f64]; 4],
}

/// Everything the backward pass needs from one step.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_forward_raw(
    wts: &LstmWeights<'_>,
    hidden: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> LstmCache {
    let mut z = Vec::with_capacity(hidden + x.len());
    z.extend_from_slice(h_prev);
    z.extend_from_slice(x);
    let width = z.len();
    let pre = |k: usize| -> Vec<f64> {
        let w = wts.w[k];
        (0..hidden)
            .map(|r| {
                let row = &w[r * width..(r + 1) * width];
                row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + wts.b[k][r]
            })
            .collect()
    };
    let f: Vec<f64> = pre(0).into_iter().map(sigmoid).collect();
    let i: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = pre(2).into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = pre(3).into_iter().map(sigmoid).collect();
    let c: Vec<f64> = (0..hidden)
        .map(|k| f[k] * c_prev[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    LstmCache {
        z,
        f,
        i,
        g,
        o,
        c_prev: c_prev.to_vec(),
        c,
        tanh_c,
        h,
    }
}

/// Gradients of one LSTM step. Accumulates into `dw`/`db` (f, i, C, o order)
/// and returns `(dh_prev, dc_prev, dx)`.
pub(crate) fn lstm_backward_raw(
    wts: &LstmWeights<'_>,
    cache: &LstmCache,
    dh: &[f64],
    dc_next: &[f64],
    dw: &mut [&mut [f64]; 4],
    db: &mut [&mut [f64]; 4],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = cache.h.len();
    let width = cache.z.len();
    let mut dpre = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (f, i, g, o, t) = (
            cache.f[k],
            cache.i[k],
            cache.g[k],
            cache.o[k],
            cache.tanh_c[k],
        );
        let d_o = dh[k] * t;
        let dc = dc_next[k] + dh[k] * o * (1.0 - t * t);
        dpre[0][k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dpre[1][k] = dc * g * i * (1.0 - i);
        dpre[2][k] = dc * i * (1.0 - g * g);
        dpre[3][k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    let mut dz = vec![0.0; width];
    for gate in 0..4 {
        let w = wts.w[gate];
        for r in 0..hidden {
            let d = dpre[gate][r];
            if d == 0.0 {
                continue;
            }
            db[gate][r] += d;
            let row = &w[r * width..(r + 1) * width];
            let drow = &mut dw[gate][r * width..(r + 1) * width];
            for c in 0..width {
                drow[c] += d * cache.z[c];
                dz[c] += d * row[c];
            }
        }
    }
    let dx = dz.split_off(hidden);
    (dz, dc_prev, dx)
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_step(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, d) = params.dims()?;
    if x.len() != d || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "LSTM step expects x[{d}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let cache = lstm_forward_raw(&params.weights(), h, x, h_prev, c_prev);
    Ok((cache.h, cache.c))
}

/// Runs `params` over `xs` from zero state, returning the last hidden state.
pub fn lstm_last_hidden<'a>(
    params: &LstmCellParams,
    xs: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Vec<f64>> {
    let (h, _) = params.dims()?;
    let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
    for x in xs {
        (hs, cs) = lstm_step(params, x, &hs, &cs)?;
    }
    Ok(hs)
}

/// Forward pass over `xs` and backward pass over the reversed sequence, both
/// from zero state; returns `[h_fwd_last; h_bwd_last]`.
pub fn bilstm_encode(
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    xs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Empty("bi-LSTM input sequence".into()));
    }
    let mut out = lstm_last_hidden(fwd, xs.iter().map(Vec::as_slice))?;
    out.extend(lstm_last_hidden(bwd, xs.iter().rev().map(Vec::as_slice))?);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2dParams {
    /// `[n_filters, in_channels, kh, kw]`
    pub filters: Tensor,
    /// `[n_filters]`
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.h - self.kh + 1
    }

    pub fn out_w(&self) -> usize {
        self.w - self.kw + 1
    }

    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.f * self.out_h() * self.out_w()
    }
}

pub(crate) fn conv_dims(input: &[usize], filters: &[usize], bias: &[usize]) -> Result<ConvDims> {
    let [c, h, w] = *input else {
        return Err(Error::Shape(format!(
            "conv input {input:?} is not [C, H, W]"
        )));
    };
    let [f, fc, kh, kw] = *filters else {
        return Err(Error::Shape(format!(
            "conv filters {filters:?} are not 4-D"
        )));
    };
    if fc != c || bias != [f] {
        return Err(Error::Shape(format!(
            "conv filters {filters:?} / bias {bias:?} do not fit input channels {c}"
        )));
    }
    if h < kh || w < kw {
        return Err(Error::Shape(format!(
            "conv input {h}x{w} smaller than kernel {kh}x{kw}"
        )));
    }
    Ok(ConvDims { c, h, w, f, kh, kw })
}

/// Unrolls the receptive fields of one `[C, H, W]` example into a
/// `[C * kh * kw, oh * ow]` matrix.
fn im2col(d: &ConvDims, x: &[f64]) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let p = oh * ow;
    let mut cols = vec![0.0; d.c * d.kh * d.kw * p];
    for c in 0..d.c {
        let xc = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let k = (c * d.kh + ki) * d.kw + kj;
                let row = &mut cols[k * p..(k + 1) * p];
                for i in 0..oh {
                    let start = (i + ki) * d.w + kj;
                    row[i * ow..(i + 1) * ow].copy_from_slice(&xc[start..start + ow]);
                }
            }
        }
    }
    cols
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with four independent accumulators.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Valid cross-correlation of one example plus bias.
pub(crate) fn conv2d_single(d: &ConvDims, x: &[f64], filt: &[f64], bias: &[f64], out: &mut [f64]) {
    let p = d.out_h() * d.out_w();
    let kk = d.c * d.kh * d.kw;
    let cols = im2col(d, x);
    for f in 0..d.f {
        let o = &mut out[f * p..(f + 1) * p];
        o.fill(bias[f]);
        let wf = &filt[f * kk..(f + 1) * kk];
        for (k, &wv) in wf.iter().enumerate() {
            axpy(wv, &cols[k * p..(k + 1) * p], o);
        }
    }
}

/// Backward of [`conv2d_single`]: accumulates filter and bias gradients and
/// returns the input gradient.
pub(crate) fn conv2d_single_backward(
    d: &ConvDims,
    x: &[f64],
    filt: &[f64],
    dy: &[f64],
    dfilt: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let p = oh * ow;
    let kk = d.c * d.kh * d.kw;
    let cols = im2col(d, x);
    let mut dcols = vec![0.0; kk * p];
    for f in 0..d.f {
        let g = &dy[f * p..(f + 1) * p];
        dbias[f] += g.iter().sum::<f64>();
        let wf = &filt[f * kk..(f + 1) * kk];
        let df = &mut dfilt[f * kk..(f + 1) * kk];
        for k in 0..kk {
            df[k] += dot(g, &cols[k * p..(k + 1) * p]);
            axpy(wf[k], g, &mut dcols[k * p..(k + 1) * p]);
        }
    }
    let mut dx = vec![0.0; d.in_len()];
    for c in 0..d.c {
        let dxc = &mut dx[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let k = (c * d.kh + ki) * d.kw + kj;
                let row = &dcols[k * p..(k + 1) * p];
                for i in 0..oh {
                    let start = (i + ki) * d.w + kj;
                    for (a, b) in dxc[start..start + ow]
                        .iter_mut()
                        .zip(&row[i * ow..(i + 1) * ow])
                    {
                        *a += b;
                    }
                }
            }
        }
    }
    dx
}

/// Valid 2-D cross-correlation of a `[C, H, W]` input plus bias. No
/// nonlinearity.
pub fn conv2d_forward(params: &Conv2dParams, input: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input.shape(), params.filters.shape(), params.bias.shape())?;
    let mut out = vec![0.0; d.out_len()];
    conv2d_single(
        &d,
        input.data(),
        params.filters.data(),
        params.bias.data(),
        &mut out,
    );
    Tensor::new(vec![d.f, d.out_h(), d.out_w()], out)
}

/// 2x2 stride-2 max pooling over `planes` planes of `h x w`. Returns the
/// pooled values and the flat input index of each maximum.
pub(crate) fn maxpool2_raw(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let cands = [
                    base + 2 * i * w + 2 * j,
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ];
                let best = cands
                    .into_iter()
                    .reduce(|a, b| if x[b] > x[a] { b } else { a })
                    .expect("four candidates");
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Max pooling with a 2x2 window and stride 2 on a `[C, H, W]` tensor; a
/// trailing odd row or column is dropped.
pub fn maxpool2(input: &Tensor) -> Result<Tensor> {
    let [c, h, w] = *input.shape() else {
        return Err(Error::Shape(format!(
            "maxpool input {:?} is not [C, H, W]",
            input.shape()
        )));
    };
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "maxpool input {h}x{w} is smaller than 2x2"
        )));
    }
    let (out, _) = maxpool2_raw(input.data(), c, h, w);
    Tensor::new(vec![c, h / 2, w / 2], out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `-ln(max(p_gold, 1e-12))`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<f64> {
    let p = probs.get(gold).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "gold class {gold} out of range for {} classes",
            probs.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Inverted dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub(crate) fn dropout_mask(len: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

pub fn dropout_apply(x: &Tensor, p: f64, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} not in [0, 1)"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), p, rng);
    let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Per-channel batch statistics over `[N, C, S]` laid out row-major. Returns
/// `(mean, biased variance)`.
pub(crate) fn channel_stats(x: &[f64], n: usize, c: usize, s: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (n * s) as f64;
    let mut mean = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            mean[ch] += x[off..off + s].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            var[ch] += x[off..off + s]
                .iter()
                .map(|v| (v - mean[ch]).powi(2))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    (mean, var)
}

/// Splits a batch shape into `(N, C, S)` with channels on axis 1.
pub(crate) fn bn_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!(
            "batch norm input {shape:?} needs [N, C, ...]"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Batch normalization with learned affine and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    /// Normalizes per channel (axis 1). Train mode uses batch statistics and
    /// folds them into the running estimates; eval mode uses the running
    /// estimates.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, s) = bn_layout(x.shape())?;
        if c != self.gamma.len() {
            return Err(Error::Shape(format!(
                "batch norm has {} channels, input {c}",
                self.gamma.len()
            )));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::InvalidArgument(
                        "batch norm in train mode needs a batch of at least 2".into(),
                    ));
                }
                let (mean, var) = channel_stats(x.data(), n, c, s);
                update_running(self, &mean, &var, n * s);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let mut out = x.data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let inv = 1.0 / (var[ch] + self.eps).sqrt();
                let off = (b * c + ch) * s;
                for v in &mut out[off..off + s] {
                    *v = self.gamma[ch] * (*v - mean[ch]) * inv + self.beta[ch];
                }
            }
        }
        Tensor::new(x.shape().to_vec(), out)
    }
}

/// `running = momentum * running + (1 - momentum) * batch`, using the
/// unbiased batch variance.
pub(crate) fn update_running(bn: &mut BatchNorm, mean: &[f64], var: &[f64], count: usize) {
    let m = bn.momentum;
    let correction = if count > 1 {
        count as f64 / (count - 1) as f64
    } else {
        1.0
    };
    for k in 0..mean.len() {
        bn.running_mean[k] = m * bn.running_mean[k] + (1.0 - m) * mean[k];
        bn.running_var[k] = m * bn.running_var[k] + (1.0 - m) * var[k] * correction;
    }
}
