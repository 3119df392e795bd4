use std::collections::BTreeMap;
use std::path::PathBuf;

use incivility::classifier::{
    evaluate, read_predictions, write_predictions, EvalReport, Prediction,
};
use incivility::corpus::Label;
use incivility::nn::Checkpoint;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::data::{unlabeled_examples, Example, JoinStats};
use crate::error::{CliError, Result};
use crate::io::{ensure_out_dir, read_labels, require, write_json, write_manifest};
use crate::models::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictSummary {
    pub model: String,
    pub scored: usize,
    pub incivil: usize,
    pub join: JoinStats,
}

/// Scores the corpus (or the test ids of `paths.split`) with
/// `paths.checkpoint` and writes `predictions.jsonl`.
pub fn cmd_predict(cfg: &PipelineConfig) -> Result<PredictSummary> {
    let ck = Checkpoint::load(require("checkpoint", &cfg.paths.checkpoint)?)?;
    let model = Classifier::from_checkpoint(&ck)?;
    let (examples, join) = unlabeled_examples(cfg, model.uses_conflicts())?;
    if examples.is_empty() {
        return Err(CliError::EmptyInput("no tweet to score".into()));
    }
    let refs: Vec<&Example> = examples.iter().collect();
    let scores = model.predict(&refs)?;
    let conflicts = model.uses_conflicts();
    let preds: Vec<Prediction> = examples
        .iter()
        .zip(scores)
        .map(|(e, p)| Prediction::new(e.tweet.id.clone(), p, conflicts.then_some(e.conflict)))
        .collect();

    ensure_out_dir(cfg)?;
    let path = cfg.out("predictions.jsonl");
    write_predictions(&path, &preds)?;
    write_manifest(cfg, "predict", &[path])?;
    Ok(PredictSummary {
        model: ck.model,
        scored: preds.len(),
        incivil: preds.iter().filter(|p| p.label_pred.is_incivil()).count(),
        join,
    })
}

/// `paths.predictions`, else `predictions.jsonl` in the output directory.
pub fn predictions_path(cfg: &PipelineConfig) -> Result<PathBuf> {
    let path = cfg
        .paths
        .predictions
        .clone()
        .unwrap_or_else(|| cfg.out("predictions.jsonl"));
    if !path.exists() {
        return Err(CliError::missing("predictions", &path, "no such file"));
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutput {
    pub seed: u64,
    pub config_digest: String,
    pub predictions: usize,
    /// Predictions whose tweet has no gold label.
    pub unlabeled: usize,
    pub report: EvalReport,
}

/// Joins predictions with gold labels and writes `eval.json`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalOutput> {
    let preds = read_predictions(&predictions_path(cfg)?)?;
    let gold: BTreeMap<String, Label> = read_labels(require("labels", &cfg.paths.labels)?)?
        .into_iter()
        .map(|l| (l.tweet_id, l.label))
        .collect();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for p in &preds {
        if let Some(&l) = gold.get(&p.tweet_id) {
            scores.push(p.p_incivil);
            labels.push(l);
        }
    }
    if scores.is_empty() {
        return Err(CliError::EmptyInput(
            "no prediction has a gold label".into(),
        ));
    }
    let out = EvalOutput {
        seed: cfg.seed,
        config_digest: cfg.digest(),
        predictions: preds.len(),
        unlabeled: preds.len() - scores.len(),
        report: evaluate(&scores, &labels)?,
    };
    ensure_out_dir(cfg)?;
    let path = cfg.out("eval.json");
    write_json(&path, &out)?;
    write_manifest(cfg, "eval", &[path])?;
    Ok(out)
}
