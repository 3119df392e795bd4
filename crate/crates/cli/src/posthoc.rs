use std::collections::{BTreeMap, BTreeSet};

use incivility::classifier::read_predictions;
use incivility::corpus::{group_timelines, load_profiles, UserProfile};
use incivility::posthoc::{
    bucket_distribution, category_summary, repetition_histogram, reputation_rows, role_swaps,
    write_buckets, write_category_summary, write_repetition, write_reputation_rows, BucketSpec,
    CategoryLexicon, Incident,
};
use incivility::text::tokenize;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{by_id, ensure_out_dir, optional, read_tweets, require, write_manifest};
use crate::predict::predictions_path;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PosthocSummary {
    pub incidents: usize,
    /// Predicted incivil tweets absent from the corpus or without targets.
    pub skipped_tweets: usize,
    pub repeat_account_share: f64,
    pub repeat_target_share: f64,
    pub role_swaps: usize,
    pub reputation_pairs: usize,
    pub reputation_skipped: usize,
    pub categories_written: bool,
}

/// Analyses the tweets predicted incivil: repetition histograms, mutual
/// attacks, reputation comparisons and follower buckets (with profiles), and
/// category-lexicon scores of the users involved (with timelines).
pub fn cmd_posthoc(cfg: &PipelineConfig) -> Result<PosthocSummary> {
    let preds = read_predictions(&predictions_path(cfg)?)?;
    let corpus = read_tweets("corpus", require("corpus", &cfg.paths.corpus)?)?;
    let index = by_id(&corpus);
    let mut summary = PosthocSummary::default();
    let mut incidents = Vec::new();
    for p in preds.iter().filter(|p| p.label_pred.is_incivil()) {
        let incident = index
            .get(p.tweet_id.as_str())
            .map(|t| Incident::from_tweet(t))
            .transpose();
        match incident {
            Ok(Some(i)) => incidents.push(i),
            Ok(None) => {
                log::warn!("predicted tweet {} is not in the corpus", p.tweet_id);
                summary.skipped_tweets += 1;
            }
            Err(e) => {
                log::warn!("tweet {}: {e}", p.tweet_id);
                summary.skipped_tweets += 1;
            }
        }
    }
    let rep = repetition_histogram(&incidents);
    summary.incidents = rep.incidents;
    summary.repeat_account_share = rep.repeat_account_share();
    summary.repeat_target_share = rep.repeat_target_share();

    ensure_out_dir(cfg)?;
    let mut outputs = Vec::new();
    let rep_path = cfg.out("repetition.csv");
    write_repetition(&rep_path, &rep)?;
    outputs.push(rep_path);

    let swaps = role_swaps(&rep);
    summary.role_swaps = swaps.len();
    let swap_path = cfg.out("role_swaps.csv");
    let mut w = csv::Writer::from_path(&swap_path)?;
    w.write_record(["user_a", "user_b"])?;
    for (a, b) in &swaps {
        w.write_record([a, b])?;
    }
    w.flush().map_err(|e| CliError::Write {
        path: swap_path.clone(),
        source: e,
    })?;
    outputs.push(swap_path);

    if let Some(p) = optional("profiles", &cfg.paths.profiles)? {
        let report = load_profiles(p)?;
        for e in &report.errors {
            log::warn!("profiles line {}: {}", e.line, e.message);
        }
        let profiles: BTreeMap<String, UserProfile> = report
            .records
            .into_iter()
            .map(|p| (p.user_id.clone(), p))
            .collect();
        let (rows, skipped) = reputation_rows(&rep, &profiles);
        for (a, t, reason) in &skipped {
            log::warn!("pair {a} -> {t}: {reason}");
        }
        summary.reputation_pairs = rows.len();
        summary.reputation_skipped = skipped.len();
        let rows_path = cfg.out("reputation_pairs.csv");
        write_reputation_rows(&rows_path, &rows)?;
        outputs.push(rows_path);

        let followers = |users: &mut dyn Iterator<Item = &String>| -> Vec<f64> {
            users
                .filter_map(|u| profiles.get(u))
                .map(|p| p.followers_count as f64)
                .collect()
        };
        let spec = BucketSpec::new(cfg.posthoc.bucket_edges.clone())?;
        let ratio_spec = BucketSpec::new(cfg.posthoc.ratio_edges.clone())?;
        let accounts = bucket_distribution(&followers(&mut rep.account_counts.keys()), &spec);
        let targets = bucket_distribution(&followers(&mut rep.target_counts.keys()), &spec);
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let ratio_dist = bucket_distribution(&ratios, &ratio_spec);
        let buckets_path = cfg.out("buckets.csv");
        write_buckets(
            &buckets_path,
            &[
                ("account_followers", &accounts),
                ("target_followers", &targets),
                ("reputation_ratio", &ratio_dist),
            ],
        )?;
        outputs.push(buckets_path);
    }

    if let Some(p) = optional("timelines", &cfg.paths.timelines)? {
        let lexicon = match optional("category_lexicon", &cfg.paths.category_lexicon)? {
            Some(path) => CategoryLexicon::load(path)?,
            None => CategoryLexicon::seed(),
        };
        let timelines = group_timelines(read_tweets("timelines", p)?);
        let group = |users: &BTreeSet<&String>| -> Vec<(String, Vec<_>)> {
            users
                .iter()
                .filter_map(|u| timelines.get(u.as_str()).map(|tl| (u.to_string(), tl)))
                .map(|(u, tl)| (u, tl.tweets().iter().map(|t| tokenize(&t.text)).collect()))
                .collect()
        };
        let accounts = category_summary(&group(&rep.account_counts.keys().collect()), &lexicon);
        let targets = category_summary(&group(&rep.target_counts.keys().collect()), &lexicon);
        let cat_path = cfg.out("categories.csv");
        write_category_summary(
            &cat_path,
            &[("account_holders", &accounts), ("targets", &targets)],
        )?;
        outputs.push(cat_path);
        summary.categories_written = true;
    }

    write_manifest(cfg, "posthoc", &outputs)?;
    Ok(summary)
}
