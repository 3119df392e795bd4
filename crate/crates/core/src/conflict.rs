//! Opinion conflicts and agreements between account holders and targets.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{IncivilityContext, Label, LabeledTweet};
use crate::error::{Error, Result};
use crate::tdsa::{profile_user, EntitySentimentProfile, SentimentCounts, TargetSentiment};
use crate::text::Recognizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpinionSign {
    Positive,
    Negative,
    Neutral,
}

/// Strict majority of positive over negative mentions; ties are neutral.
pub fn aggregate_sign(counts: SentimentCounts) -> OpinionSign {
    use std::cmp::Ordering::*;
    match counts.pos.cmp(&counts.neg) {
        Greater => OpinionSign::Positive,
        Less => OpinionSign::Negative,
        Equal => OpinionSign::Neutral,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub account_holder: String,
    pub target: String,
    pub conflicts: u64,
    pub agreements: u64,
    /// Signs of both users on every shared entity.
    pub per_entity: BTreeMap<String, (OpinionSign, OpinionSign)>,
}

pub fn count_conflicts(a: &EntitySentimentProfile, t: &EntitySentimentProfile) -> ConflictReport {
    let mut report = ConflictReport {
        account_holder: a.user_id.clone(),
        target: t.user_id.clone(),
        conflicts: 0,
        agreements: 0,
        per_entity: BTreeMap::new(),
    };
    for (entity, ca) in &a.counts {
        let Some(ct) = t.counts.get(entity) else {
            continue;
        };
        let (sa, st) = (aggregate_sign(*ca), aggregate_sign(*ct));
        match (sa, st) {
            (OpinionSign::Neutral, _) | (_, OpinionSign::Neutral) => {}
            _ if sa == st => report.agreements += 1,
            _ => report.conflicts += 1,
        }
        report.per_entity.insert(entity.clone(), (sa, st));
    }
    report
}

/// One report per target of the context; targets without a profile
/// contribute an empty report.
pub fn context_reports(
    ctx: &IncivilityContext,
    profiles: &BTreeMap<String, EntitySentimentProfile>,
) -> Result<Vec<ConflictReport>> {
    let a = profiles
        .get(&ctx.account_holder_id)
        .ok_or_else(|| Error::MissingProfile(ctx.account_holder_id.clone()))?;
    Ok(ctx
        .target_ids
        .iter()
        .map(|t| match profiles.get(t) {
            Some(p) => count_conflicts(a, p),
            None => count_conflicts(a, &EntitySentimentProfile::new(t.clone())),
        })
        .collect())
}

/// Total opinion conflicts between the account holder and all targets.
pub fn conflict_feature(
    ctx: &IncivilityContext,
    profiles: &BTreeMap<String, EntitySentimentProfile>,
) -> Result<u64> {
    Ok(context_reports(ctx, profiles)?
        .iter()
        .map(|r| r.conflicts)
        .sum())
}

/// Profiles every user that has a timeline in some context. Users whose
/// timeline was missing get no profile.
pub fn build_profiles(
    contexts: &[IncivilityContext],
    recognizer: &dyn Recognizer,
    model: &dyn TargetSentiment,
) -> Result<BTreeMap<String, EntitySentimentProfile>> {
    let mut slices: BTreeMap<&str, &[crate::corpus::Tweet]> = BTreeMap::new();
    for ctx in contexts {
        if !ctx.missing_timelines.contains(&ctx.account_holder_id) {
            slices
                .entry(&ctx.account_holder_id)
                .or_insert(&ctx.account_context);
        }
        for (t, tweets) in &ctx.target_contexts {
            if !ctx.missing_timelines.contains(t) {
                slices.entry(t).or_insert(tweets);
            }
        }
    }
    let users: Vec<(&str, &[crate::corpus::Tweet])> = slices.into_iter().collect();
    let profiles: Vec<EntitySentimentProfile> = users
        .par_iter()
        .map(|(u, tweets)| profile_user(u, tweets, recognizer, model))
        .collect::<Result<_>>()?;
    Ok(profiles
        .into_iter()
        .map(|p| (p.user_id.clone(), p))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassConflictStats {
    pub label: Label,
    pub incidents: usize,
    pub with_conflict_fraction: f64,
    pub mean_conflicts: f64,
    pub se_conflicts: f64,
    pub mean_agreements: f64,
    pub se_agreements: f64,
    pub total_conflicts: u64,
    pub total_agreements: u64,
}

/// Per-class summary; a class with no incidents is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictStatistics {
    pub civil: Option<ClassConflictStats>,
    pub incivil: Option<ClassConflictStats>,
    pub note: &'static str,
}

pub const CONFLICT_SHARE_NOTE: &str = "conflict share is ambiguous: divide total_conflicts by \
     (total_conflicts + total_agreements) for the share of polar opinion pairs, or by the number of \
     profiled sentiments for the share of all sentiments";

/// Mean and standard error of the mean (sample standard deviation over
/// the square root of n; zero for fewer than two values).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn conflict_statistics(
    contexts: &[IncivilityContext],
    labels: &[LabeledTweet],
    profiles: &BTreeMap<String, EntitySentimentProfile>,
) -> Result<ConflictStatistics> {
    let by_id: BTreeMap<&str, Label> = labels
        .iter()
        .map(|l| (l.tweet_id.as_str(), l.label))
        .collect();
    let mut per: BTreeMap<Label, Vec<(u64, u64)>> = BTreeMap::new();
    for ctx in contexts {
        let label = *by_id.get(ctx.tweet_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("no label for tweet {}", ctx.tweet_id))
        })?;
        let reports = context_reports(ctx, profiles)?;
        let c = reports.iter().map(|r| r.conflicts).sum();
        let a = reports.iter().map(|r| r.agreements).sum();
        per.entry(label).or_default().push((c, a));
    }
    let summarize = |label: Label| {
        per.get(&label).filter(|v| !v.is_empty()).map(|v| {
            let cs: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let as_: Vec<f64> = v.iter().map(|x| x.1 as f64).collect();
            let (mean_conflicts, se_conflicts) = mean_se(&cs);
            let (mean_agreements, se_agreements) = mean_se(&as_);
            ClassConflictStats {
                label,
                incidents: v.len(),
                with_conflict_fraction: v.iter().filter(|x| x.0 >= 1).count() as f64
                    / v.len() as f64,
                mean_conflicts,
                se_conflicts,
                mean_agreements,
                se_agreements,
                total_conflicts: v.iter().map(|x| x.0).sum(),
                total_agreements: v.iter().map(|x| x.1).sum(),
            }
        })
    };
    Ok(ConflictStatistics {
        civil: summarize(Label::Civil),
        incivil: summarize(Label::Incivil),
        note: CONFLICT_SHARE_NOTE,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// `class,status,incidents,...`; absent classes keep their row with
/// status `absent` and empty values.
pub fn write_conflict_statistics(path: &Path, stats: &ConflictStatistics) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "class",
        "status",
        "incidents",
        "with_conflict_fraction",
        "mean_conflicts",
        "se_conflicts",
        "mean_agreements",
        "se_agreements",
        "total_conflicts",
        "total_agreements",
    ])?;
    for (label, row) in [
        (Label::Civil, &stats.civil),
        (Label::Incivil, &stats.incivil),
    ] {
        match row {
            Some(s) => w.write_record([
                label.as_str().to_string(),
                "present".into(),
                s.incidents.to_string(),
                s.with_conflict_fraction.to_string(),
                s.mean_conflicts.to_string(),
                s.se_conflicts.to_string(),
                s.mean_agreements.to_string(),
                s.se_agreements.to_string(),
                s.total_conflicts.to_string(),
                s.total_agreements.to_string(),
            ])?,
            None => {
                let mut rec = vec![label.as_str().to_string(), "absent".into(), "0".into()];
                rec.extend(std::iter::repeat_n(String::new(), 7));
                w.write_record(rec)?
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRow {
    pub tweet_id: String,
    pub account_holder: String,
    pub target: String,
    pub conflicts: u64,
    pub agreements: u64,
}

pub fn write_conflict_rows(path: &Path, rows: &[ConflictRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record([
            "tweet_id",
            "account_holder",
            "target",
            "conflicts",
            "agreements",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictCount {
    pub tweet_id: String,
    pub conflict_count: u64,
}

pub fn write_conflict_counts(path: &Path, rows: &[ConflictCount]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record(["tweet_id", "conflict_count"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_conflict_counts(path: &Path) -> Result<BTreeMap<String, u64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let mut out = BTreeMap::new();
    for row in r.deserialize() {
        let row: ConflictCount = row?;
        out.insert(row.tweet_id, row.conflict_count);
    }
    Ok(out)
}
