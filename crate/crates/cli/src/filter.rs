use std::fmt;

use incivility::corpus::{
    load_lexicon, load_tweets, mention_filter, offensive_filter, save_tweets,
};
use incivility::features::{content_features, textual_features, CONTENT_NAMES, TEXTUAL_NAMES};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::io::{ensure_out_dir, read_tweets, require, write_json, write_manifest};

/// Kept and dropped counts of the two filter stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub input: usize,
    pub malformed: usize,
    pub offensive_kept: usize,
    pub offensive_dropped: usize,
    pub mention_kept: usize,
    pub mention_dropped: usize,
}

impl fmt::Display for FilterStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "input {} (malformed {}); offensive kept {} dropped {}; mention kept {} dropped {}",
            self.input,
            self.malformed,
            self.offensive_kept,
            self.offensive_dropped,
            self.mention_kept,
            self.mention_dropped
        )
    }
}

#[derive(Serialize)]
struct FilterOutput {
    seed: u64,
    config_digest: String,
    stats: FilterStats,
}

/// Applies the offensive-lexicon filter, then the mention filter, writing
/// `filtered.jsonl` and `filter_stats.json`.
pub fn cmd_filter(cfg: &PipelineConfig) -> Result<FilterStats> {
    let corpus_path = require("corpus", &cfg.paths.corpus)?;
    let lexicon_path = require("lexicon", &cfg.paths.lexicon)?;
    let lexicon = load_lexicon(lexicon_path)?;
    let report = load_tweets(corpus_path)?;
    for e in &report.errors {
        log::warn!("corpus line {}: {}", e.line, e.message);
    }
    let tweets = report.records;
    let offensive = offensive_filter(&tweets, &lexicon);
    let kept = mention_filter(&offensive);
    let stats = FilterStats {
        input: tweets.len() + report.errors.len(),
        malformed: report.errors.len(),
        offensive_kept: offensive.len(),
        offensive_dropped: tweets.len() - offensive.len(),
        mention_kept: kept.len(),
        mention_dropped: offensive.len() - kept.len(),
    };

    ensure_out_dir(cfg)?;
    let out = cfg.out("filtered.jsonl");
    save_tweets(&out, &kept)?;
    let stats_path = cfg.out("filter_stats.json");
    write_json(
        &stats_path,
        &FilterOutput {
            seed: cfg.seed,
            config_digest: cfg.digest(),
            stats,
        },
    )?;
    write_manifest(cfg, "filter", &[out, stats_path])?;
    Ok(stats)
}

/// Writes `features.csv`: tweet id, the five content features and the ten
/// textual features.
pub fn cmd_featurize(cfg: &PipelineConfig) -> Result<usize> {
    let corpus_path = require("corpus", &cfg.paths.corpus)?;
    let lexicon = load_lexicon(require("lexicon", &cfg.paths.lexicon)?)?;
    let tweets = read_tweets("corpus", corpus_path)?;
    ensure_out_dir(cfg)?;
    let path = cfg.out("features.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let header: Vec<&str> = std::iter::once("tweet_id")
        .chain(CONTENT_NAMES)
        .chain(TEXTUAL_NAMES)
        .collect();
    w.write_record(&header)?;
    for t in &tweets {
        let content = content_features(t, &lexicon)?;
        let textual = textual_features(t, &lexicon);
        let row: Vec<String> = std::iter::once(t.id.clone())
            .chain(
                content
                    .values
                    .iter()
                    .chain(&textual.values)
                    .map(|v| v.to_string()),
            )
            .collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| crate::error::CliError::Write {
        path: path.clone(),
        source: e,
    })?;
    write_manifest(cfg, "featurize", &[path])?;
    Ok(tweets.len())
}
