use std::collections::BTreeSet;
use std::path::PathBuf;

use incivility::classifier::{evaluate, EvalReport};
use incivility::corpus::{load_lexicon, Label};
use incivility::nn::{stratified_split, History};
use incivility::tdsa::{
    load_tdsa_tsv, train_tdsa_split, SentimentLabel, TdExample, WordEmbeddingTable,
};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::data::{labeled_examples, split_examples, Example, JoinStats};
use crate::error::{CliError, Result};
use crate::io::{ensure_out_dir, optional, require, write_bytes, write_json, write_manifest};
use crate::models::{Classifier, ModelKind};

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub model: String,
    pub seed: u64,
    pub config_digest: String,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub join: JoinStats,
    pub model_info: serde_json::Value,
    pub history: Option<History>,
    /// TD-LSTM sentiment accuracy on its validation split.
    pub valid_accuracy: Option<f64>,
    /// Incivility metrics on the held-out test split.
    pub test: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: TrainMetrics,
    pub checkpoint: PathBuf,
}

/// Trains one model and writes `<model>.ckpt.json`, `<model>.metrics.json`
/// and, for incivility models, `<model>.split.json`.
pub fn cmd_train(cfg: &PipelineConfig, kind: ModelKind) -> Result<TrainOutcome> {
    if kind == ModelKind::Tdsa {
        return train_tdsa_cmd(cfg);
    }
    let lexicon = optional("lexicon", &cfg.paths.lexicon)?
        .map(load_lexicon)
        .transpose()?;
    if matches!(kind, ModelKind::Logistic | ModelKind::NgramLogistic) && lexicon.is_none() {
        return Err(CliError::Unconfigured("lexicon"));
    }
    let (examples, join) = labeled_examples(cfg, kind.uses_conflicts())?;
    if join.missing_conflicts > 0 {
        log::warn!(
            "{} labeled tweets have no conflict count; using 0",
            join.missing_conflicts
        );
    }
    let split = split_examples(cfg, &examples)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| &examples[i]).collect::<Vec<&Example>>();
    let train = pick(&split.train);
    let mut valid = pick(&split.valid);
    if valid.is_empty() {
        log::warn!("validation split is empty; early stopping watches the training loss");
        valid = train.clone();
    }
    let test = pick(&split.test);

    let (model, history) = Classifier::fit(
        kind,
        &train,
        &valid,
        &cfg.char_model,
        &cfg.baseline,
        lexicon,
        cfg.seed,
    )?;
    let test_report = if test.is_empty() {
        None
    } else {
        let labels: Vec<Label> = test.iter().filter_map(|e| e.label).collect();
        Some(evaluate(&model.predict(&test)?, &labels)?)
    };

    ensure_out_dir(cfg)?;
    let stem = kind.file_stem();
    let ck_path = cfg.out(&format!("{stem}.ckpt.json"));
    write_bytes(&ck_path, &model.to_checkpoint(cfg.seed)?.to_bytes()?)?;
    let split_path = cfg.out(&format!("{stem}.split.json"));
    write_json(&split_path, &split.to_file(cfg, &examples))?;
    let metrics = TrainMetrics {
        model: kind.checkpoint_name().into(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        n_train: train.len(),
        n_valid: split.valid.len(),
        n_test: test.len(),
        join,
        model_info: model.describe(),
        history,
        valid_accuracy: None,
        test: test_report,
    };
    let metrics_path = cfg.out(&format!("{stem}.metrics.json"));
    write_json(&metrics_path, &metrics)?;
    write_manifest(
        cfg,
        &format!("train-{stem}"),
        &[ck_path.clone(), metrics_path, split_path],
    )?;
    Ok(TrainOutcome {
        metrics,
        checkpoint: ck_path,
    })
}

fn vocabulary_of(data: &[TdExample]) -> Vec<String> {
    let words: BTreeSet<String> = data
        .iter()
        .flat_map(|e| e.tokens.lowers().map(str::to_string))
        .collect();
    words.into_iter().collect()
}

fn train_tdsa_cmd(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let data = load_tdsa_tsv(require("tdsa_data", &cfg.paths.tdsa_data)?)?;
    if data.is_empty() {
        return Err(CliError::EmptyInput(
            "sentiment dataset has no examples".into(),
        ));
    }
    let embeddings = match optional("embeddings", &cfg.paths.embeddings)? {
        Some(p) => WordEmbeddingTable::load(p)?,
        None => WordEmbeddingTable::random(
            &vocabulary_of(&data),
            cfg.tdsa.random_embedding_dim,
            cfg.seed,
        )?,
    };
    let mut config = cfg.tdsa.model.clone();
    config.training.seed = cfg.seed;

    let labels: Vec<SentimentLabel> = data
        .iter()
        .map(|e| {
            e.label
                .ok_or_else(|| CliError::Config("sentiment example without a label".into()))
        })
        .collect::<Result<_>>()?;
    let (tr, va) = stratified_split(&labels, config.train_fraction, config.training.seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let train = pick(&tr);
    let mut valid = pick(&va);
    if valid.is_empty() {
        log::warn!("validation split is empty; early stopping watches the training loss");
        valid = train.clone();
    }
    let (model, history) = train_tdsa_split(&train, &valid, &embeddings, &config)?;
    let correct = valid
        .iter()
        .map(|e| Ok(Some(model.predict(e)?) == e.label))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();

    ensure_out_dir(cfg)?;
    let ck_path = cfg.out("tdsa.ckpt.json");
    write_bytes(
        &ck_path,
        &model.to_checkpoint(cfg.seed, &config)?.to_bytes()?,
    )?;
    let metrics = TrainMetrics {
        model: ModelKind::Tdsa.checkpoint_name().into(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        n_train: train.len(),
        n_valid: va.len(),
        n_test: 0,
        join: JoinStats::default(),
        model_info: serde_json::json!({
            "vocabulary": model.vocabulary().len(),
            "embedding_dim": embeddings.dim(),
        }),
        history: Some(history),
        valid_accuracy: Some(correct as f64 / valid.len() as f64),
        test: None,
    };
    let metrics_path = cfg.out("tdsa.metrics.json");
    write_json(&metrics_path, &metrics)?;
    write_manifest(cfg, "train-tdsa", &[ck_path.clone(), metrics_path])?;
    Ok(TrainOutcome {
        metrics,
        checkpoint: ck_path,
    })
}
