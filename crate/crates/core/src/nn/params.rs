use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub trainable: bool,
    pub tensor: Tensor,
}

/// Named model tensors in registration order. Non-trainable entries hold
/// buffers such as batch-norm running statistics or frozen embeddings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            self.id(&name).is_none(),
            "parameter {name} registered twice"
        );
        self.entries.push(ParamEntry {
            name,
            trainable,
            tensor,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Checks that `other` has the same names and shapes, as when loading a
    /// checkpoint into a freshly built model.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    b.name,
                    b.tensor.shape(),
                    a.name,
                    a.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-r..r));
    t
}

/// Per-parameter gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub(crate) fn slot(&mut self, id: ParamId, shape: &[usize]) -> &mut Tensor {
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
    }

    /// Mutable access to several distinct, already initialized slots, in the
    /// order of `ids`.
    pub(crate) fn many_mut(&mut self, ids: &[ParamId]) -> Vec<&mut Tensor> {
        let mut found: Vec<(usize, &mut Tensor)> = self
            .grads
            .iter_mut()
            .enumerate()
            .filter_map(|(i, g)| {
                let pos = ids.iter().position(|id| id.0 == i)?;
                Some((pos, g.as_mut().expect("slot initialized")))
            })
            .collect();
        found.sort_by_key(|(pos, _)| *pos);
        found.into_iter().map(|(_, t)| t).collect()
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor) {
        self.grads[id.0] = Some(grad);
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::Shape("gradient sets of different models".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (_, None) => {}
                (Some(a), Some(b)) => a.add_assign(b)?,
                (None, Some(b)) => *a = Some(b.clone()),
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.grads.iter_mut().flatten().for_each(|g| g.scale(k));
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.max_abs()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

/// Plain gradient step `p <- p - lr * g` over trainable parameters.
pub fn sgd_update(params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    if grads.grads.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} parameters",
            grads.grads.len(),
            params.len()
        )));
    }
    for (entry, grad) in params.entries.iter_mut().zip(&grads.grads) {
        let Some(grad) = grad else { continue };
        if grad.shape() != entry.tensor.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {} {:?}",
                grad.shape(),
                entry.name,
                entry.tensor.shape()
            )));
        }
        if !entry.trainable || lr == 0.0 {
            continue;
        }
        for (p, g) in entry.tensor.data_mut().iter_mut().zip(grad.data()) {
            *p -= lr * g;
        }
    }
    Ok(())
}
