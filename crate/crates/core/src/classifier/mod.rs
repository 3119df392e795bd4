//! Incivility classifiers over characters and hand-crafted features, and
//! their evaluation.

mod bilstm;
mod cnn;
mod fusion;
mod logistic;
mod metrics;

pub use bilstm::{BiLstmClassifier, BILSTM_MODEL};
pub use cnn::{CharCnn, CharCnnTrunk, CHARCNN_MODEL};
pub use fusion::{FusionModel, Standardizer, FUSION_MODEL};
pub use logistic::{logistic_predict, logistic_train, LogisticConfig, LogisticModel};
pub use metrics::{evaluate, roc_auc, Confusion, EvalReport};

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::nn::{softmax, Graph, Mode, NodeId, Trainable, TrainingConfig};
use crate::text::{char_encode, CharSeq, CharVocab};

/// Architecture sizes of the character models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharModelConfig {
    pub max_len: usize,
    pub char_dim: usize,
    pub filters: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub fusion_hidden: usize,
    pub min_char_count: usize,
    pub training: TrainingConfig,
}

impl Default for CharModelConfig {
    fn default() -> Self {
        CharModelConfig {
            max_len: 64,
            char_dim: 16,
            filters: 16,
            kernel: 5,
            lstm_hidden: 32,
            fusion_hidden: 64,
            min_char_count: 1,
            training: TrainingConfig::default(),
        }
    }
}

impl CharModelConfig {
    /// Full-size architecture: 280 characters, 100-dimensional embeddings
    /// and 100 filters per convolution.
    pub fn full() -> Self {
        CharModelConfig {
            max_len: 280,
            char_dim: 100,
            filters: 100,
            lstm_hidden: 100,
            ..Default::default()
        }
    }
}

/// One encoded tweet with its conflict count and (for training) its label.
#[derive(Debug, Clone, PartialEq)]
pub struct CharExample {
    pub seq: CharSeq,
    pub conflict: u64,
    pub label: Option<Label>,
}

impl CharExample {
    pub fn encode(
        text: &str,
        vocab: &CharVocab,
        max_len: usize,
        conflict: u64,
        label: Option<Label>,
    ) -> Result<Self> {
        Ok(CharExample {
            seq: char_encode(text, vocab, max_len)?,
            conflict,
            label,
        })
    }
}

pub(crate) fn class_index(label: Label) -> usize {
    usize::from(label.is_incivil())
}

pub(crate) fn gold(batch: &[&CharExample]) -> Result<Vec<usize>> {
    batch
        .iter()
        .map(|e| {
            e.label
                .map(class_index)
                .ok_or_else(|| Error::InvalidArgument("training example without a label".into()))
        })
        .collect()
}

pub(crate) fn check_vocab(
    vocab: &CharVocab,
    max_len: Option<usize>,
    batch: &[&CharExample],
) -> Result<()> {
    for e in batch {
        if let Some(m) = max_len {
            if e.seq.max_len() != m {
                return Err(Error::VocabularyMismatch(format!(
                    "sequence encoded to {} characters, model expects {m}",
                    e.seq.max_len()
                )));
            }
        }
        if let Some(&bad) = e.seq.indices.iter().find(|&&i| i >= vocab.size()) {
            return Err(Error::VocabularyMismatch(format!(
                "character index {bad} outside a vocabulary of {}",
                vocab.size()
            )));
        }
    }
    Ok(())
}

/// Shared inference surface of the character models.
pub trait CharClassifier: Trainable<Example = CharExample> {
    fn vocab(&self) -> &CharVocab;

    fn config(&self) -> &CharModelConfig;

    /// Records the forward pass of a batch up to `[N, 2]` logits.
    fn logits(&self, g: &mut Graph<'_>, batch: &[&CharExample]) -> Result<NodeId>;

    fn encode(&self, text: &str, conflict: u64, label: Option<Label>) -> Result<CharExample> {
        CharExample::encode(text, self.vocab(), self.config().max_len, conflict, label)
    }

    /// Class distributions `[P(civil), P(incivil)]` in eval mode.
    fn predict_dist(&self, xs: &[CharExample]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(64) {
            let refs: Vec<&CharExample> = chunk.iter().collect();
            let mut g = Graph::new(self.params(), Mode::Eval, 0);
            let logits = self.logits(&mut g, &refs)?;
            for row in g.value(logits).data().chunks(2) {
                let p = softmax(row);
                out.push([p[0], p[1]]);
            }
        }
        Ok(out)
    }

    /// `P(incivil)` per example.
    fn predict_proba(&self, xs: &[CharExample]) -> Result<Vec<f64>> {
        Ok(self.predict_dist(xs)?.into_iter().map(|p| p[1]).collect())
    }
}

/// Accuracy at threshold 0.5 of a model over labelled examples.
pub fn accuracy_of<M: CharClassifier>(model: &M, xs: &[CharExample]) -> Result<f64> {
    let p = model.predict_proba(xs)?;
    let labels: Vec<Label> = xs
        .iter()
        .map(|e| {
            e.label
                .ok_or_else(|| Error::InvalidArgument("unlabelled example".into()))
        })
        .collect::<Result<_>>()?;
    Ok(evaluate(&p, &labels)?.accuracy)
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tweet_id: String,
    pub p_incivil: f64,
    pub label_pred: Label,
    pub conflict_feature: Option<u64>,
}

impl Prediction {
    pub fn new(tweet_id: impl Into<String>, p_incivil: f64, conflict_feature: Option<u64>) -> Self {
        Prediction {
            tweet_id: tweet_id.into(),
            p_incivil,
            label_pred: if p_incivil >= metrics::THRESHOLD {
                Label::Incivil
            } else {
                Label::Civil
            },
            conflict_feature,
        }
    }
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
