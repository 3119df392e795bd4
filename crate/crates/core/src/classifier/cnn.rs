use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_vocab, gold, CharClassifier, CharExample, CharModelConfig};
use crate::error::{Error, Result};
use crate::nn::{
    add_batch_norm, add_linear, glorot_uniform, BatchNormIds, Checkpoint, Graph, NodeId, ParamId,
    ParamStore, Trainable,
};
use crate::text::{CharVocab, PAD};

pub const CHARCNN_MODEL: &str = "char-cnn";

/// Embedding plus two convolution blocks
/// (conv, batch norm, ReLU, 2x2 max-pool), ending in a flat vector.
#[derive(Debug, Clone, Copy)]
pub struct CharCnnTrunk {
    embed: ParamId,
    conv1: (ParamId, ParamId),
    bn1: BatchNormIds,
    conv2: (ParamId, ParamId),
    bn2: BatchNormIds,
    flat_dim: usize,
}

/// Output sizes after each stage: conv1, pool1, conv2, pool2 as
/// `(h, w)` pairs.
pub fn shape_chain(cfg: &CharModelConfig) -> Result<[(usize, usize); 4]> {
    let k = cfg.kernel;
    let conv = |(h, w): (usize, usize)| -> Result<(usize, usize)> {
        if h < k || w < k {
            return Err(Error::InvalidArgument(format!(
                "{h}x{w} map is smaller than the {k}x{k} kernel"
            )));
        }
        Ok((h - k + 1, w - k + 1))
    };
    let pool = |(h, w): (usize, usize)| -> Result<(usize, usize)> {
        if h < 2 || w < 2 {
            return Err(Error::InvalidArgument(format!(
                "{h}x{w} map is too small to pool"
            )));
        }
        Ok((h / 2, w / 2))
    };
    if k == 0 || cfg.filters == 0 || cfg.char_dim == 0 || cfg.max_len == 0 {
        return Err(Error::InvalidArgument(
            "architecture sizes must be positive".into(),
        ));
    }
    let c1 = conv((cfg.max_len, cfg.char_dim))?;
    let p1 = pool(c1)?;
    let c2 = conv(p1)?;
    let p2 = pool(c2)?;
    Ok([c1, p1, c2, p2])
}

pub(crate) fn add_char_embedding(
    params: &mut ParamStore,
    vocab: &CharVocab,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> ParamId {
    let v = vocab.size();
    let mut table = glorot_uniform(&[v, dim], v, dim, rng);
    table.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
    params.add("embed.chars", table, true)
}

impl CharCnnTrunk {
    pub fn new(
        params: &mut ParamStore,
        vocab: &CharVocab,
        cfg: &CharModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let [_, _, _, (h, w)] = shape_chain(cfg)?;
        let (f, k) = (cfg.filters, cfg.kernel);
        let embed = add_char_embedding(params, vocab, cfg.char_dim, rng);
        let conv = |params: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng| {
            let w = params.add(
                format!("{name}.filters"),
                glorot_uniform(&[f, c, k, k], c * k * k, f * k * k, rng),
                true,
            );
            let b = params.add(format!("{name}.bias"), crate::nn::Tensor::zeros(&[f]), true);
            (w, b)
        };
        let conv1 = conv(params, "conv1", 1, rng);
        let bn1 = add_batch_norm(params, "bn1", f);
        let conv2 = conv(params, "conv2", f, rng);
        let bn2 = add_batch_norm(params, "bn2", f);
        Ok(CharCnnTrunk {
            embed,
            conv1,
            bn1,
            conv2,
            bn2,
            flat_dim: f * h * w,
        })
    }

    pub fn resolve(params: &ParamStore, cfg: &CharModelConfig) -> Result<Self> {
        let [_, _, _, (h, w)] = shape_chain(cfg)?;
        let bn = |p: &str| -> Result<BatchNormIds> {
            Ok(BatchNormIds {
                gamma: param(params, &format!("{p}.gamma"))?,
                beta: param(params, &format!("{p}.beta"))?,
                running_mean: param(params, &format!("{p}.running_mean"))?,
                running_var: param(params, &format!("{p}.running_var"))?,
            })
        };
        Ok(CharCnnTrunk {
            embed: param(params, "embed.chars")?,
            conv1: (
                param(params, "conv1.filters")?,
                param(params, "conv1.bias")?,
            ),
            bn1: bn("bn1")?,
            conv2: (
                param(params, "conv2.filters")?,
                param(params, "conv2.bias")?,
            ),
            bn2: bn("bn2")?,
            flat_dim: cfg.filters * h * w,
        })
    }

    pub fn flat_dim(&self) -> usize {
        self.flat_dim
    }

    /// `[N, flat_dim]` features of a batch.
    pub fn flatten(
        &self,
        g: &mut Graph<'_>,
        cfg: &CharModelConfig,
        batch: &[&CharExample],
    ) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let n = batch.len();
        let indices: Vec<usize> = batch
            .iter()
            .flat_map(|e| e.seq.indices.iter().copied())
            .collect();
        let e = g.embedding(self.embed, &indices, Some(PAD))?;
        let x = g.reshape(e, &[n, 1, cfg.max_len, cfg.char_dim])?;
        let c1 = g.conv2d(x, self.conv1.0, self.conv1.1)?;
        let b1 = g.batch_norm(c1, self.bn1)?;
        let r1 = g.relu(b1);
        let p1 = g.maxpool2(r1)?;
        let c2 = g.conv2d(p1, self.conv2.0, self.conv2.1)?;
        let b2 = g.batch_norm(c2, self.bn2)?;
        let r2 = g.relu(b2);
        let p2 = g.maxpool2(r2)?;
        g.reshape(p2, &[n, self.flat_dim])
    }
}

pub(crate) fn param(params: &ParamStore, name: &str) -> Result<ParamId> {
    params
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
}

/// Fails unless the stored character table has one row per vocabulary entry.
pub(crate) fn check_char_table(params: &ParamStore, vocab: &CharVocab) -> Result<()> {
    let rows = params.get(param(params, "embed.chars")?).shape()[0];
    if rows != vocab.size() {
        return Err(Error::VocabularyMismatch(format!(
            "checkpoint vocabulary has {} characters but its embedding table has {rows} rows",
            vocab.size()
        )));
    }
    Ok(())
}

/// Character CNN classifier: trunk, dropout, dense layer, softmax.
#[derive(Debug, Clone)]
pub struct CharCnn {
    config: CharModelConfig,
    vocab: CharVocab,
    params: ParamStore,
    trunk: CharCnnTrunk,
    out: (ParamId, ParamId),
}

impl CharCnn {
    pub fn new(vocab: CharVocab, config: CharModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let trunk = CharCnnTrunk::new(&mut params, &vocab, &config, &mut rng)?;
        let out = add_linear(&mut params, "out", trunk.flat_dim, 2, &mut rng);
        Ok(CharCnn {
            config,
            vocab,
            params,
            trunk,
            out,
        })
    }

    pub fn trunk(&self) -> &CharCnnTrunk {
        &self.trunk
    }

    pub fn to_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            CHARCNN_MODEL,
            seed,
            serde_json::to_value(&self.config)?,
            serde_json::to_value(&self.vocab)?,
            self.params.clone(),
        ))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model(CHARCNN_MODEL)?;
        let config: CharModelConfig = serde_json::from_value(ck.config.clone())?;
        let vocab: CharVocab = serde_json::from_value(ck.vocab.clone())?;
        check_char_table(&ck.params, &vocab)?;
        let trunk = CharCnnTrunk::resolve(&ck.params, &config)?;
        let out = (
            param(&ck.params, "out.weight")?,
            param(&ck.params, "out.bias")?,
        );
        Ok(CharCnn {
            config,
            vocab,
            params: ck.params.clone(),
            trunk,
            out,
        })
    }
}

impl CharClassifier for CharCnn {
    fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    fn config(&self) -> &CharModelConfig {
        &self.config
    }

    fn logits(&self, g: &mut Graph<'_>, batch: &[&CharExample]) -> Result<NodeId> {
        check_vocab(&self.vocab, Some(self.config.max_len), batch)?;
        let flat = self.trunk.flatten(g, &self.config, batch)?;
        let d = g.dropout(flat, self.config.training.dropout)?;
        g.linear(d, self.out.0, self.out.1)
    }
}

impl Trainable for CharCnn {
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
