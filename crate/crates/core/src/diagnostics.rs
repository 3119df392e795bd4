//! Gradient verification of the layers and of every model end to end.

use crate::classifier::{BiLstmClassifier, CharCnn, CharExample, CharModelConfig, FusionModel};
use crate::corpus::Label;
use crate::error::Result;
use crate::nn::gradcheck::{check_graph_sampled, layer_suite, GradCheckReport};
use crate::nn::{Graph, Mode, Trainable};
use crate::synth;
use crate::tdsa::{TdLstm, TdLstmConfig, WordEmbeddingTable};
use crate::text::CharVocab;

/// Coordinates checked per parameter tensor in the model checks.
pub const SAMPLES_PER_TENSOR: usize = 64;

fn check_model<M: Trainable + Clone>(
    name: &str,
    model: &M,
    batch: &[M::Example],
) -> Result<GradCheckReport> {
    let frozen = model.clone();
    let mut m = model.clone();
    check_graph_sampled(
        name,
        m.params_mut(),
        Mode::Train,
        SAMPLES_PER_TENSOR,
        |g: &mut Graph<'_>| {
            let refs: Vec<&M::Example> = batch.iter().collect();
            frozen.batch_loss(g, &refs)
        },
    )
}

fn char_batch(vocab: &CharVocab, cfg: &CharModelConfig, seed: u64) -> Result<Vec<CharExample>> {
    synth::gated_corpus(4, seed)
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            // force both classes into the batch
            let label = if i % 2 == 0 {
                Label::Civil
            } else {
                Label::Incivil
            };
            CharExample::encode(
                &g.text,
                vocab,
                cfg.max_len,
                g.conflict + i as u64,
                Some(label),
            )
        })
        .collect()
}

/// End-to-end checks of the char-CNN, char-biLSTM, fusion model and TD-LSTM
/// at the default (desk) sizes.
pub fn model_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let cfg = CharModelConfig::default();
    let texts = synth::planted_corpus(50, seed);
    let vocab = CharVocab::fit(texts.iter().map(|t| t.0.as_str()), 1);
    let batch = char_batch(&vocab, &cfg, seed)?;
    let mut reports = Vec::new();

    let cnn = CharCnn::new(vocab.clone(), cfg.clone(), seed)?;
    reports.push(check_model("char-cnn", &cnn, &batch)?);

    let bilstm = BiLstmClassifier::new(vocab.clone(), cfg.clone(), seed)?;
    reports.push(check_model("char-bilstm", &bilstm, &batch[..2])?);

    let mut fusion = FusionModel::new(vocab, cfg, seed)?;
    fusion.fit_standardizer(&batch)?;
    reports.push(check_model("fusion", &fusion, &batch)?);

    let td_cfg = TdLstmConfig::default();
    let table = WordEmbeddingTable::random(&synth::sentiment_vocabulary(), 16, seed)?;
    let td = TdLstm::new(&table, &td_cfg, seed)?;
    let mut examples = synth::two_entity_examples(2, seed);
    examples.truncate(3);
    reports.push(check_model("td-lstm", &td, &examples)?);
    Ok(reports)
}

/// Layer checks followed by the model checks.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = layer_suite(seed)?;
    reports.extend(model_suite(seed)?);
    Ok(reports)
}
