use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cnn::{check_char_table, param, CharCnnTrunk};
use super::{check_vocab, gold, CharClassifier, CharExample, CharModelConfig};
use crate::error::{Error, Result};
use crate::nn::{add_linear, Checkpoint, Graph, NodeId, ParamId, ParamStore, Tensor, Trainable};
use crate::text::CharVocab;

pub const FUSION_MODEL: &str = "fusion";

/// Centering and scaling of the conflict count by training-set statistics.
/// A zero spread only centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("standardizer input".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.std > 0.0 {
            (x - self.mean) / self.std
        } else {
            x - self.mean
        }
    }
}

/// Char-CNN trunk whose flat features are joined with the standardized
/// conflict count and fed through a one-hidden-layer ReLU network.
#[derive(Debug, Clone)]
pub struct FusionModel {
    config: CharModelConfig,
    vocab: CharVocab,
    params: ParamStore,
    trunk: CharCnnTrunk,
    hidden: (ParamId, ParamId),
    out: (ParamId, ParamId),
    standardizer: Option<Standardizer>,
}

impl FusionModel {
    pub fn new(vocab: CharVocab, config: CharModelConfig, seed: u64) -> Result<Self> {
        if config.fusion_hidden == 0 {
            return Err(Error::InvalidArgument(
                "fusion hidden width must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let trunk = CharCnnTrunk::new(&mut params, &vocab, &config, &mut rng)?;
        let hidden = add_linear(
            &mut params,
            "hidden",
            trunk.flat_dim() + 1,
            config.fusion_hidden,
            &mut rng,
        );
        let out = add_linear(&mut params, "out", config.fusion_hidden, 2, &mut rng);
        Ok(FusionModel {
            config,
            vocab,
            params,
            trunk,
            hidden,
            out,
            standardizer: None,
        })
    }

    /// Fits the conflict standardizer on training examples.
    pub fn fit_standardizer(&mut self, train: &[CharExample]) -> Result<Standardizer> {
        let values: Vec<f64> = train.iter().map(|e| e.conflict as f64).collect();
        let s = Standardizer::fit(&values)?;
        self.standardizer = Some(s);
        Ok(s)
    }

    pub fn set_standardizer(&mut self, s: Standardizer) {
        self.standardizer = Some(s);
    }

    pub fn standardizer(&self) -> Option<Standardizer> {
        self.standardizer
    }

    /// Column of the hidden-layer weight matrix fed by the conflict input.
    pub fn conflict_column(&self) -> usize {
        self.trunk.flat_dim()
    }

    pub fn hidden_weight(&self) -> ParamId {
        self.hidden.0
    }

    pub fn to_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        let s = self
            .standardizer
            .ok_or_else(|| Error::NotFitted("conflict standardizer".into()))?;
        let mut ck = Checkpoint::new(
            FUSION_MODEL,
            seed,
            serde_json::to_value(&self.config)?,
            serde_json::to_value(&self.vocab)?,
            self.params.clone(),
        );
        ck.extra = serde_json::json!({ "standardizer": s });
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model(FUSION_MODEL)?;
        let config: CharModelConfig = serde_json::from_value(ck.config.clone())?;
        let vocab: CharVocab = serde_json::from_value(ck.vocab.clone())?;
        check_char_table(&ck.params, &vocab)?;
        let standardizer: Standardizer = serde_json::from_value(ck.extra["standardizer"].clone())?;
        let trunk = CharCnnTrunk::resolve(&ck.params, &config)?;
        Ok(FusionModel {
            hidden: (
                param(&ck.params, "hidden.weight")?,
                param(&ck.params, "hidden.bias")?,
            ),
            out: (
                param(&ck.params, "out.weight")?,
                param(&ck.params, "out.bias")?,
            ),
            config,
            vocab,
            params: ck.params.clone(),
            trunk,
            standardizer: Some(standardizer),
        })
    }
}

impl CharClassifier for FusionModel {
    fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    fn config(&self) -> &CharModelConfig {
        &self.config
    }

    fn logits(&self, g: &mut Graph<'_>, batch: &[&CharExample]) -> Result<NodeId> {
        let s = self
            .standardizer
            .ok_or_else(|| Error::NotFitted("conflict standardizer".into()))?;
        check_vocab(&self.vocab, Some(self.config.max_len), batch)?;
        let flat = self.trunk.flatten(g, &self.config, batch)?;
        let flat = g.dropout(flat, self.config.training.dropout)?;
        let conflict = Tensor::new(
            vec![batch.len(), 1],
            batch.iter().map(|e| s.apply(e.conflict as f64)).collect(),
        )?;
        let c = g.input(conflict);
        let joined = g.concat(&[flat, c])?;
        let h = g.linear(joined, self.hidden.0, self.hidden.1)?;
        let h = g.relu(h);
        g.linear(h, self.out.0, self.out.1)
    }
}

impl Trainable for FusionModel {
    type Example = CharExample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, g: &mut Graph<'_>, batch: &[&CharExample]) -> Result<NodeId> {
        let gold = gold(batch)?;
        let logits = self.logits(g, batch)?;
        g.softmax_cross_entropy(logits, &gold)
    }
}
