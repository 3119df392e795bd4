use std::collections::BTreeSet;

use incivility::conflict::{
    build_profiles, conflict_statistics, context_reports, write_conflict_counts,
    write_conflict_rows, write_conflict_statistics, ConflictCount, ConflictRow,
};
use incivility::corpus::{build_context, group_timelines, IncivilityContext};
use incivility::nn::Checkpoint;
use incivility::tdsa::{TargetSentiment, TdLstm};
use incivility::text::{AnnotatedRecognizer, Recognizer, RuleRecognizer};
use incivility::Error;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{ensure_out_dir, optional, read_labels, read_tweets, require, write_manifest};

/// A tweet left out of the conflict file, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub tweet_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConflictSummary {
    pub context_k: usize,
    pub tweets: usize,
    pub scored: usize,
    pub skipped: Vec<Skipped>,
    /// Users referenced by some context whose timeline was missing.
    pub missing_timelines: BTreeSet<String>,
    /// Largest per-user context used.
    pub largest_context: usize,
    pub statistics_written: bool,
}

/// Loads the TD-LSTM checkpoint and runs [`run_conflicts`] with it.
pub fn cmd_conflicts(cfg: &PipelineConfig, context_k: Option<usize>) -> Result<ConflictSummary> {
    let ck_path = require("tdsa_checkpoint", &cfg.paths.tdsa_checkpoint)?;
    let model = TdLstm::from_checkpoint(&Checkpoint::load(ck_path)?)?;
    run_conflicts(cfg, context_k, &model)
}

/// Builds incivility contexts for every corpus tweet, profiles the users with
/// `model`, and writes `conflicts.csv` (`tweet_id,conflict_count`) and
/// `conflict_pairs.csv`. With labels configured, `conflict_stats.csv` is
/// written as well. Tweets without targets, or whose account holder has no
/// timeline, are skipped and reported.
pub fn run_conflicts(
    cfg: &PipelineConfig,
    context_k: Option<usize>,
    model: &dyn TargetSentiment,
) -> Result<ConflictSummary> {
    let k = context_k.unwrap_or(cfg.conflicts.context_k);
    if k == 0 {
        return Err(CliError::Config("context size must be positive".into()));
    }
    let corpus = read_tweets("corpus", require("corpus", &cfg.paths.corpus)?)?;
    let timelines = group_timelines(read_tweets(
        "timelines",
        require("timelines", &cfg.paths.timelines)?,
    )?);
    let recognizer: Box<dyn Recognizer> = match optional("entities", &cfg.paths.entities)? {
        Some(p) => Box::new(AnnotatedRecognizer::load(p)?),
        None => Box::new(RuleRecognizer),
    };
    let labels = optional("labels", &cfg.paths.labels)?
        .map(read_labels)
        .transpose()?;

    let mut summary = ConflictSummary {
        context_k: k,
        tweets: corpus.len(),
        ..Default::default()
    };
    let mut contexts: Vec<IncivilityContext> = Vec::new();
    for t in &corpus {
        match build_context(t, &timelines, k) {
            Ok(ctx) => contexts.push(ctx),
            Err(e @ (Error::NoTargets(_) | Error::SelfMentionOnly(_))) => {
                summary.skipped.push(Skipped {
                    tweet_id: t.id.clone(),
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    let profiles = build_profiles(&contexts, recognizer.as_ref(), model)?;

    let mut counts = Vec::new();
    let mut rows = Vec::new();
    let mut scored = Vec::new();
    for ctx in contexts {
        summary
            .missing_timelines
            .extend(ctx.missing_timelines.iter().cloned());
        let reports = match context_reports(&ctx, &profiles) {
            Ok(r) => r,
            Err(e @ Error::MissingProfile(_)) => {
                summary.skipped.push(Skipped {
                    tweet_id: ctx.tweet_id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let largest = ctx
            .target_contexts
            .values()
            .map(Vec::len)
            .chain([ctx.account_context.len()])
            .max()
            .unwrap_or(0);
        summary.largest_context = summary.largest_context.max(largest);
        counts.push(ConflictCount {
            tweet_id: ctx.tweet_id.clone(),
            conflict_count: reports.iter().map(|r| r.conflicts).sum(),
        });
        rows.extend(reports.into_iter().map(|r| ConflictRow {
            tweet_id: ctx.tweet_id.clone(),
            account_holder: r.account_holder,
            target: r.target,
            conflicts: r.conflicts,
            agreements: r.agreements,
        }));
        scored.push(ctx);
    }
    summary.scored = counts.len();

    ensure_out_dir(cfg)?;
    let counts_path = cfg.out("conflicts.csv");
    write_conflict_counts(&counts_path, &counts)?;
    let rows_path = cfg.out("conflict_pairs.csv");
    write_conflict_rows(&rows_path, &rows)?;
    let mut outputs = vec![counts_path, rows_path];
    if let Some(labels) = labels {
        let ids: BTreeSet<&str> = labels.iter().map(|l| l.tweet_id.as_str()).collect();
        let labeled: Vec<IncivilityContext> = scored
            .into_iter()
            .filter(|c| ids.contains(c.tweet_id.as_str()))
            .collect();
        let stats = conflict_statistics(&labeled, &labels, &profiles)?;
        let stats_path = cfg.out("conflict_stats.csv");
        write_conflict_statistics(&stats_path, &stats)?;
        outputs.push(stats_path);
        summary.statistics_written = true;
    }
    write_manifest(cfg, "conflicts", &outputs)?;
    Ok(summary)
}
