use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cnn::{add_char_embedding, check_char_table, param};
use super::{check_vocab, gold, CharClassifier, CharExample, CharModelConfig};
use crate::error::{Error, Result};
use crate::nn::{
    add_linear, add_lstm, Checkpoint, Graph, LstmIds, NodeId, ParamId, ParamStore, Trainable,
};
use crate::text::{CharVocab, PAD};

pub const BILSTM_MODEL: &str = "char-bilstm";

/// Character biLSTM over the unpadded prefix; the last forward and backward
/// states are concatenated, passed through dropout and a dense layer.
#[derive(Debug, Clone)]
pub struct BiLstmClassifier {
    config: CharModelConfig,
    vocab: CharVocab,
    params: ParamStore,
    embed: ParamId,
    fwd: LstmIds,
    bwd: LstmIds,
    out: (ParamId, ParamId),
}

fn resolve_lstm(params: &ParamStore, prefix: &str) -> Result<LstmIds> {
    let gates = ["f", "i", "c", "o"];
    let mut w = [ParamId(0); 4];
    let mut b = [ParamId(0); 4];
    for (k, g) in gates.iter().enumerate() {
        w[k] = param(params, &format!("{prefix}.w_{g}"))?;
        b[k] = param(params, &format!("{prefix}.b_{g}"))?;
    }
    Ok(LstmIds { w, b })
}

impl BiLstmClassifier {
    pub fn new(vocab: CharVocab, config: CharModelConfig, seed: u64) -> Result<Self> {
        if config.lstm_hidden == 0 || config.char_dim == 0 {
            return Err(Error::InvalidArgument(
                "architecture sizes must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (h, d) = (config.lstm_hidden, config.char_dim);
        let embed = add_char_embedding(&mut params, &vocab, d, &mut rng);
        let fwd = add_lstm(&mut params, "fwd", h, d, &mut rng);
        let bwd = add_lstm(&mut params, "bwd", h, d, &mut rng);
        let out = add_linear(&mut params, "out", 2 * h, 2, &mut rng);
        Ok(BiLstmClassifier {
            config,
            vocab,
            params,
            embed,
            fwd,
            bwd,
            out,
        })
    }

    pub fn to_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            BILSTM_MODEL,
            seed,
            serde_json::to_value(&self.config)?,
            serde_json::to_value(&self.vocab)?,
            self.params.clone(),
        ))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model(BILSTM_MODEL)?;
        let vocab: CharVocab = serde_json::from_value(ck.vocab.clone())?;
        check_char_table(&ck.params, &vocab)?;
        Ok(BiLstmClassifier {
            config: serde_json::from_value(ck.config.clone())?,
            vocab,
            embed: param(&ck.params, "embed.chars")?,
            fwd: resolve_lstm(&ck.params, "fwd")?,
            bwd: resolve_lstm(&ck.params, "bwd")?,
            out: (
                param(&ck.params, "out.weight")?,
                param(&ck.params, "out.bias")?,
            ),
            params: ck.params.clone(),
        })
    }
}

impl CharClassifier for BiLstmClassifier {
    fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    fn config(&self) -> &CharModelConfig {
        &self.config
    }

    fn logits(&self, g: &mut Graph<'_>, batch: &[&CharExample]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        check_vocab(&self.vocab, None, batch)?;
        let mut encoded = Vec::with_capacity(batch.len());
        for e in batch {
            let len = e.seq.length;
            if len == 0 {
                return Err(Error::Empty("character sequence".into()));
            }
            let emb = g.embedding(self.embed, &e.seq.indices[..len], Some(PAD))?;
            let rows: Vec<NodeId> = (0..len).map(|t| g.row(emb, t)).collect::<Result<_>>()?;
            let hf = g.lstm_sequence(&self.fwd, &rows)?;
            let rev: Vec<NodeId> = rows.iter().rev().copied().collect();
            let hb = g.lstm_sequence(&self.bwd, &rev)?;
            encoded.push(g.concat(&[hf, hb])?);
        }
        let flat = g.concat(&encoded)?;
        let stacked = g.reshape(flat, &[batch.len(), 2 * self.config.lstm_hidden])?;
        let d = g.dropout(stacked, self.config.training.dropout)?;
        g.linear(d, self.out.0, self.out.1)
    }
}

impl Trainable for BiLstmClassifier {
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
