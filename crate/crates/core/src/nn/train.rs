use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{apply_bn_updates, Graph, NodeId};
use super::ops::{Mode, BN_MOMENTUM};
use super::params::{sgd_update, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            dropout: 0.25,
            patience: 3,
            batch_size: 32,
            max_epochs: 50,
            seed: 0,
        }
    }
}

/// Field-wise overrides layered onto model-specific training defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl TrainingOverrides {
    pub fn apply(self, base: TrainingConfig) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            dropout: self.dropout.unwrap_or(base.dropout),
            patience: self.patience.unwrap_or(base.patience),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a non-negative finite number");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("patience, batch size and max epochs must be positive");
        }
        Ok(())
    }
}

/// A model trainable by [`train_loop`].
pub trait Trainable: Sync {
    type Example: Sync;

    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// Records the forward pass of a mini-batch and returns the scalar mean
    /// loss node.
    fn batch_loss(&self, graph: &mut Graph<'_>, batch: &[&Self::Example]) -> Result<NodeId>;

    /// Hook run after every parameter update.
    fn after_step(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a loss that should decrease.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// 1-based epoch of the best loss seen so far (0 before any).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Splits a shuffled order into mini-batches. A trailing batch of one is
/// merged into its predecessor so batch statistics are always defined.
pub(crate) fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = order.len();
        let start = n - 1 - out.last().map_or(0, |b| b.len());
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}

/// Mean loss over `data` in eval mode.
pub fn mean_loss<M: Trainable>(model: &M, data: &[M::Example], batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation split".into()));
    }
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&M::Example> = chunk.iter().collect();
        let mut g = Graph::new(model.params(), Mode::Eval, 0);
        let loss = model.batch_loss(&mut g, &refs)?;
        total += g.value(loss).data()[0] * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Seeded mini-batch SGD with patience-based early stopping on validation
/// loss. On return the model holds the parameters of the best validation
/// epoch.
pub fn train_loop<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    valid: &[M::Example],
    config: &TrainingConfig,
) -> Result<History> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Empty(
            "train and validation splits must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.params().clone();
    let mut history = History::default();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&order, config.batch_size) {
            let refs: Vec<&M::Example> = batch.iter().map(|&i| &train[i]).collect();
            let graph_seed: u64 = rng.gen();
            let (loss, grads, bn) = {
                let mut g = Graph::new(model.params(), Mode::Train, graph_seed);
                let node = model.batch_loss(&mut g, &refs)?;
                let loss = g.value(node).data()[0];
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                (loss, g.backward(node)?, g.bn_updates().to_vec())
            };
            sgd_update(model.params_mut(), &grads, config.learning_rate)?;
            apply_bn_updates(model.params_mut(), &bn, BN_MOMENTUM);
            model.after_step();
            total += loss * refs.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = mean_loss(model, valid, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(val_loss) {
            StopDecision::Improved => best = model.params().clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    *model.params_mut() = best;
    Ok(history)
}

/// Seeded stratified split of example indices. Each class contributes its
/// share of `round(fraction * n)` training slots by largest remainder, so the
/// overall train size is exact. Returns `(train, held_out)`, each sorted.
pub fn stratified_split<K: Ord + Clone>(
    labels: &[K],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} outside [0, 1]"
        )));
    }
    let mut classes: std::collections::BTreeMap<K, Vec<usize>> = Default::default();
    for (i, k) in labels.iter().enumerate() {
        classes.entry(k.clone()).or_default().push(i);
    }
    let n = labels.len();
    let target = (fraction * n as f64).round() as usize;
    let mut quota: Vec<usize> = Vec::with_capacity(classes.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(classes.len());
    for (c, members) in classes.values().enumerate() {
        let exact = fraction * members.len() as f64;
        quota.push(exact.floor() as usize);
        remainders.push((exact - exact.floor(), c));
    }
    let assigned: usize = quota.iter().sum();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in remainders.iter().take(target.saturating_sub(assigned)) {
        quota[c] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut rest) = (Vec::new(), Vec::new());
    for (members, q) in classes.into_values().zip(quota) {
        let mut members = members;
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..q]);
        rest.extend_from_slice(&members[q..]);
    }
    train.sort_unstable();
    rest.sort_unstable();
    Ok((train, rest))
}
