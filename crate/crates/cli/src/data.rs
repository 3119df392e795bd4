use std::collections::BTreeMap;
use std::path::Path;

use incivility::conflict::read_conflict_counts;
use incivility::corpus::{Label, Tweet};
use incivility::nn::stratified_split;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{by_id, optional, read_labels, read_tweets, require};

/// A corpus tweet joined with its label and conflict count.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tweet: Tweet,
    pub label: Option<Label>,
    pub conflict: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinStats {
    /// Labeled ids absent from the corpus.
    pub missing_tweets: usize,
    /// Examples with no row in the conflict file; their count is taken as 0.
    pub missing_conflicts: usize,
}

pub fn load_conflicts(
    cfg: &PipelineConfig,
    required: bool,
) -> Result<Option<BTreeMap<String, u64>>> {
    let path = if required {
        Some(require("conflicts", &cfg.paths.conflicts)?)
    } else {
        optional("conflicts", &cfg.paths.conflicts)?
    };
    Ok(path.map(read_conflict_counts).transpose()?)
}

fn conflict_of(conflicts: &Option<BTreeMap<String, u64>>, id: &str, stats: &mut JoinStats) -> u64 {
    match conflicts {
        Some(map) => map.get(id).copied().unwrap_or_else(|| {
            stats.missing_conflicts += 1;
            0
        }),
        None => 0,
    }
}

/// Labeled corpus tweets, in label-file order.
pub fn labeled_examples(
    cfg: &PipelineConfig,
    need_conflicts: bool,
) -> Result<(Vec<Example>, JoinStats)> {
    let tweets = read_tweets("corpus", require("corpus", &cfg.paths.corpus)?)?;
    let labels = read_labels(require("labels", &cfg.paths.labels)?)?;
    let conflicts = load_conflicts(cfg, need_conflicts)?;
    let index = by_id(&tweets);
    let mut stats = JoinStats::default();
    let mut out = Vec::with_capacity(labels.len());
    for l in &labels {
        let Some(t) = index.get(l.tweet_id.as_str()) else {
            stats.missing_tweets += 1;
            continue;
        };
        out.push(Example {
            tweet: (*t).clone(),
            label: Some(l.label),
            conflict: conflict_of(&conflicts, &l.tweet_id, &mut stats),
        });
    }
    if out.is_empty() {
        return Err(CliError::EmptyInput(
            "no labeled tweet was found in the corpus".into(),
        ));
    }
    Ok((out, stats))
}

/// Corpus tweets to score, optionally restricted to the test ids of a split
/// file (in that order).
pub fn unlabeled_examples(
    cfg: &PipelineConfig,
    need_conflicts: bool,
) -> Result<(Vec<Example>, JoinStats)> {
    let tweets = read_tweets("corpus", require("corpus", &cfg.paths.corpus)?)?;
    let conflicts = load_conflicts(cfg, need_conflicts)?;
    let mut stats = JoinStats::default();
    let chosen: Vec<Tweet> = match optional("split", &cfg.paths.split)? {
        Some(p) => {
            let split = SplitFile::load(p)?;
            let index = by_id(&tweets);
            let mut out = Vec::with_capacity(split.test.len());
            for id in &split.test {
                match index.get(id.as_str()) {
                    Some(t) => out.push((*t).clone()),
                    None => stats.missing_tweets += 1,
                }
            }
            out
        }
        None => tweets,
    };
    let examples = chosen
        .into_iter()
        .map(|tweet| {
            let conflict = conflict_of(&conflicts, &tweet.id, &mut stats);
            Example {
                tweet,
                label: None,
                conflict,
            }
        })
        .collect();
    Ok((examples, stats))
}

/// Tweet ids of the train, validation and test parts of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| CliError::missing("split", path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }
}

/// Index sets of a seeded, stratified train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_examples(cfg: &PipelineConfig, examples: &[Example]) -> Result<Split> {
    let labels: Vec<Label> = examples
        .iter()
        .map(|e| {
            e.label
                .ok_or_else(|| CliError::Config("unlabeled example in training data".into()))
        })
        .collect::<Result<_>>()?;
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(incivility::Error::SingleClass.into());
    }
    let (fit, test) = stratified_split(&labels, cfg.split.train_fraction, cfg.seed)?;
    let fit_labels: Vec<Label> = fit.iter().map(|&i| labels[i]).collect();
    let (tr, va) = stratified_split(
        &fit_labels,
        1.0 - cfg.split.valid_fraction,
        cfg.seed.wrapping_add(1),
    )?;
    Ok(Split {
        train: tr.iter().map(|&i| fit[i]).collect(),
        valid: va.iter().map(|&i| fit[i]).collect(),
        test,
    })
}

impl Split {
    pub fn to_file(&self, cfg: &PipelineConfig, examples: &[Example]) -> SplitFile {
        let ids = |ix: &[usize]| ix.iter().map(|&i| examples[i].tweet.id.clone()).collect();
        SplitFile {
            seed: cfg.seed,
            train_fraction: cfg.split.train_fraction,
            valid_fraction: cfg.split.valid_fraction,
            train: ids(&self.train),
            valid: ids(&self.valid),
            test: ids(&self.test),
        }
    }
}
