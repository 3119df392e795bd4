//! Central finite-difference verification of back-propagated gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, NodeId};
use super::ops::Mode;
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use super::{add_batch_norm, add_linear, add_lstm};
use crate::error::{Error, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Pass threshold on the maximum relative error.
pub const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor of the relative error. Central differences with step
/// 1e-4 carry an absolute truncation error of order 1e-9, so gradients
/// smaller than this floor are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-5;
/// Largest share of sampled coordinates that may be skipped as kink
/// crossings before a check counts as failed.
pub const MAX_KINK_SHARE: f64 = 0.2;

/// Result of one evaluation of the function under test.
pub struct Probe {
    pub loss: f64,
    /// Analytic gradients; only needed at the base point.
    pub grads: Option<Gradients>,
    /// Kink signature of the pass (see `Graph::kink_signature`).
    pub signature: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose +/- step crossed a ReLU or max-pool switch, where
    /// the central difference does not estimate the derivative.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        let sampled = (self.checked + self.skipped_kinks) as f64;
        self.checked > 0
            && self.max_rel_err < MAX_REL_ERR
            && self.skipped_kinks as f64 <= MAX_KINK_SHARE * sampled
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares analytic gradients against central differences for every
/// coordinate of every trainable parameter (or those in `only`, when given).
pub fn check_gradients<F>(
    name: &str,
    params: &mut ParamStore,
    only: Option<&[ParamId]>,
    probe: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<Probe>,
{
    check_gradients_sampled(name, params, only, usize::MAX, 0, probe)
}

/// Like [`check_gradients`], but checks at most `per_tensor` coordinates of
/// each parameter, drawn without replacement from a generator seeded with
/// `seed`.
pub fn check_gradients_sampled<F>(
    name: &str,
    params: &mut ParamStore,
    only: Option<&[ParamId]>,
    per_tensor: usize,
    seed: u64,
    mut probe: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<Probe>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = probe(params)?;
    let grads = base
        .grads
        .ok_or_else(|| Error::InvalidArgument("base probe must return gradients".into()))?;
    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => params
            .ids()
            .filter(|&id| params.entry(id).trainable)
            .collect(),
    };
    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for id in ids {
        let len = params.get(id).len();
        let coords: Vec<usize> = if per_tensor >= len {
            (0..len).collect()
        } else {
            let mut picked = rand::seq::index::sample(&mut rng, len, per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };
        for k in coords {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let plus = probe(params)?;
            params.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let minus = probe(params)?;
            params.get_mut(id).data_mut()[k] = orig;
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * FD_STEP);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((params.entry(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}

/// Probes a loss built by `build` on a fresh graph in `mode` with a fixed
/// dropout seed.
pub fn graph_probe<F>(
    params: &ParamStore,
    mode: Mode,
    seed: u64,
    with_grads: bool,
    build: &F,
) -> Result<Probe>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut g = Graph::new(params, mode, seed);
    let loss = build(&mut g)?;
    let grads = if with_grads {
        Some(g.backward(loss)?)
    } else {
        None
    };
    Ok(Probe {
        loss: g.value(loss).data()[0],
        grads,
        signature: g.kink_signature(),
    })
}

/// Runs the checker on a graph-built loss.
pub fn check_graph<F>(
    name: &str,
    params: &mut ParamStore,
    mode: Mode,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    check_graph_sampled(name, params, mode, usize::MAX, build)
}

/// Runs the sampled checker on a graph-built loss.
pub fn check_graph_sampled<F>(
    name: &str,
    params: &mut ParamStore,
    mode: Mode,
    per_tensor: usize,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut first = true;
    check_gradients_sampled(name, params, None, per_tensor, 17, |p| {
        let r = graph_probe(p, mode, 17, first, &build);
        first = false;
        r
    })
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("non-empty shape")
}

fn perturb_all(params: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

/// Gradient checks for every differentiable layer: embedding, dense, LSTM,
/// bidirectional LSTM, convolution, batch normalization, max-pooling,
/// ReLU and dropout, each closed by softmax cross-entropy.
pub fn layer_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    // embedding -> dense
    {
        let mut ps = ParamStore::new();
        let table = ps.add("emb", rand_tensor(&[6, 4], &mut rng), true);
        let (w, b) = add_linear(&mut ps, "out", 4, 3, &mut rng);
        perturb_all(&mut ps, &mut rng, 0.1);
        reports.push(check_graph("embedding", &mut ps, Mode::Train, |g| {
            let e = g.embedding(table, &[3, 2, 5, 2], Some(0))?;
            let y = g.linear(e, w, b)?;
            g.softmax_cross_entropy(y, &[0, 1, 2, 1])
        })?);
    }

    // dense -> relu -> dense
    {
        let mut ps = ParamStore::new();
        let (w1, b1) = add_linear(&mut ps, "h", 5, 7, &mut rng);
        let (w2, b2) = add_linear(&mut ps, "o", 7, 3, &mut rng);
        perturb_all(&mut ps, &mut rng, 0.1);
        let x = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_graph("dense", &mut ps, Mode::Train, |g| {
            let x = g.input(x.clone());
            let h = g.linear(x, w1, b1)?;
            let h = g.relu(h);
            let y = g.linear(h, w2, b2)?;
            g.softmax_cross_entropy(y, &[2, 0, 1, 1])
        })?);
    }

    // unidirectional LSTM over a sequence
    {
        let mut ps = ParamStore::new();
        let cell = add_lstm(&mut ps, "lstm", 4, 3, &mut rng);
        let (w, b) = add_linear(&mut ps, "o", 4, 3, &mut rng);
        perturb_all(&mut ps, &mut rng, 0.2);
        let xs: Vec<Tensor> = (0..5).map(|_| rand_tensor(&[1, 3], &mut rng)).collect();
        reports.push(check_graph("lstm", &mut ps, Mode::Train, |g| {
            let nodes: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
            let h = g.lstm_sequence(&cell, &nodes)?;
            let y = g.linear(h, w, b)?;
            g.softmax_cross_entropy(y, &[1])
        })?);
    }

    // bidirectional LSTM with embedded inputs
    {
        let mut ps = ParamStore::new();
        let table = ps.add("emb", rand_tensor(&[5, 3], &mut rng), true);
        let fwd = add_lstm(&mut ps, "fwd", 3, 3, &mut rng);
        let bwd = add_lstm(&mut ps, "bwd", 3, 3, &mut rng);
        let (w, b) = add_linear(&mut ps, "o", 6, 2, &mut rng);
        perturb_all(&mut ps, &mut rng, 0.2);
        let ids = [1usize, 4, 2, 3];
        reports.push(check_graph("bilstm", &mut ps, Mode::Train, |g| {
            let e = g.embedding(table, &ids, Some(0))?;
            let rows: Vec<NodeId> = (0..ids.len()).map(|t| g.row(e, t)).collect::<Result<_>>()?;
            let hf = g.lstm_sequence(&fwd, &rows)?;
            let rev: Vec<NodeId> = rows.iter().rev().copied().collect();
            let hb = g.lstm_sequence(&bwd, &rev)?;
            let h = g.concat(&[hf, hb])?;
            let y = g.linear(h, w, b)?;
            g.softmax_cross_entropy(y, &[1])
        })?);
    }

    // conv -> maxpool -> dense
    {
        let mut ps = ParamStore::new();
        let f = ps.add("conv.filters", rand_tensor(&[2, 1, 3, 3], &mut rng), true);
        let fb = ps.add("conv.bias", rand_tensor(&[2], &mut rng), true);
        let (w, b) = add_linear(&mut ps, "o", 2 * 3 * 2, 3, &mut rng);
        let x = rand_tensor(&[2, 1, 8, 6], &mut rng);
        reports.push(check_graph("conv2d", &mut ps, Mode::Train, |g| {
            let x = g.input(x.clone());
            let c = g.conv2d(x, f, fb)?;
            let p = g.maxpool2(c)?;
            let flat = g.reshape(p, &[2, 12])?;
            let y = g.linear(flat, w, b)?;
            g.softmax_cross_entropy(y, &[0, 2])
        })?);
    }

    // conv -> batchnorm (train statistics) -> relu -> dropout -> dense
    {
        let mut ps = ParamStore::new();
        let f = ps.add("conv.filters", rand_tensor(&[2, 1, 2, 2], &mut rng), true);
        let fb = ps.add("conv.bias", rand_tensor(&[2], &mut rng), true);
        let bn = add_batch_norm(&mut ps, "bn", 2);
        let (w, b) = add_linear(&mut ps, "o", 2 * 3 * 3, 2, &mut rng);
        perturb_all(&mut ps, &mut rng, 0.3);
        let x = rand_tensor(&[3, 1, 4, 4], &mut rng);
        reports.push(check_graph("batchnorm", &mut ps, Mode::Train, |g| {
            let x = g.input(x.clone());
            let c = g.conv2d(x, f, fb)?;
            let n = g.batch_norm(c, bn)?;
            let r = g.relu(n);
            let d = g.dropout(r, 0.25)?;
            let flat = g.reshape(d, &[3, 18])?;
            let y = g.linear(flat, w, b)?;
            g.softmax_cross_entropy(y, &[1, 0, 1])
        })?);
    }

    Ok(reports)
}
