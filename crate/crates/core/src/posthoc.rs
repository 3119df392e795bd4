//! Post-hoc analytics over predicted incivil tweets: reputation scores,
//! repetition histograms, bucketed distributions and category-lexicon scores.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::mean_se;
use crate::corpus::{extract_pairs, Tweet, UserProfile};
use crate::error::{Error, Result};
use crate::text::{normalize_user, Token, TokenSeq};

/// followers / (followers + friends).
pub fn reputation(profile: &UserProfile) -> Result<f64> {
    let total = profile.followers_count as f64 + profile.friends_count as f64;
    if total == 0.0 {
        return Err(Error::UndefinedReputation(profile.user_id.clone()));
    }
    Ok(profile.followers_count as f64 / total)
}

/// rep(target) / rep(account holder).
pub fn reputation_ratio(account: &UserProfile, target: &UserProfile) -> Result<f64> {
    let a = reputation(account)?;
    let t = reputation(target)?;
    if a == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "account holder {} has zero reputation",
            account.user_id
        )));
    }
    Ok(t / a)
}

/// One incivil tweet with its author and targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub tweet_id: String,
    pub account_holder: String,
    pub targets: Vec<String>,
}

impl Incident {
    pub fn new(tweet_id: impl Into<String>, account_holder: &str, targets: &[&str]) -> Self {
        Incident {
            tweet_id: tweet_id.into(),
            account_holder: account_holder.to_string(),
            targets: targets.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn from_tweet(tweet: &Tweet) -> Result<Self> {
        let pair = extract_pairs(tweet)?;
        Ok(Incident {
            tweet_id: tweet.id.clone(),
            account_holder: pair.account_holder,
            targets: pair.targets,
        })
    }
}

/// Per-user incident counts and the histograms of repeated involvement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repetition {
    pub incidents: usize,
    pub account_counts: BTreeMap<String, usize>,
    pub target_counts: BTreeMap<String, usize>,
    pub pair_counts: BTreeMap<(String, String), usize>,
    /// times attacked (>= 2) -> number of account holders
    pub account_histogram: BTreeMap<usize, usize>,
    /// times targeted (>= 2) -> number of targets
    pub target_histogram: BTreeMap<usize, usize>,
    pub account_singletons: usize,
    pub target_singletons: usize,
}

impl Repetition {
    /// Share of account holders with more than one incident.
    pub fn repeat_account_share(&self) -> f64 {
        share(
            self.account_histogram.values().sum(),
            self.account_counts.len(),
        )
    }

    pub fn repeat_target_share(&self) -> f64 {
        share(
            self.target_histogram.values().sum(),
            self.target_counts.len(),
        )
    }
}

fn share(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

fn histogram(counts: &BTreeMap<String, usize>) -> (BTreeMap<usize, usize>, usize) {
    let mut hist = BTreeMap::new();
    let mut singles = 0;
    for &c in counts.values() {
        if c >= 2 {
            *hist.entry(c).or_insert(0) += 1;
        } else {
            singles += 1;
        }
    }
    (hist, singles)
}

/// Counts incidents per account holder and per target. Handles are
/// normalized, duplicate tweet ids are counted once, and a target named
/// twice in the same tweet or equal to its author is ignored.
pub fn repetition_histogram(incidents: &[Incident]) -> Repetition {
    let mut rep = Repetition::default();
    let mut seen = BTreeSet::new();
    for inc in incidents {
        if !seen.insert(inc.tweet_id.as_str()) {
            continue;
        }
        rep.incidents += 1;
        let author = normalize_user(&inc.account_holder);
        *rep.account_counts.entry(author.clone()).or_insert(0) += 1;
        let targets: BTreeSet<String> = inc
            .targets
            .iter()
            .map(|t| normalize_user(t))
            .filter(|t| !t.is_empty() && *t != author)
            .collect();
        for t in targets {
            *rep.pair_counts
                .entry((author.clone(), t.clone()))
                .or_insert(0) += 1;
            *rep.target_counts.entry(t).or_insert(0) += 1;
        }
    }
    (rep.account_histogram, rep.account_singletons) = histogram(&rep.account_counts);
    (rep.target_histogram, rep.target_singletons) = histogram(&rep.target_counts);
    rep
}

/// Unordered pairs of users who each attacked the other, as (smaller, larger).
pub fn role_swaps(rep: &Repetition) -> Vec<(String, String)> {
    rep.pair_counts
        .keys()
        .filter(|(a, t)| a < t && rep.pair_counts.contains_key(&(t.clone(), a.clone())))
        .cloned()
        .collect()
}

/// Strictly increasing bucket boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    edges: Vec<f64>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec {
            edges: vec![1.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
        }
    }
}

fn human(v: f64) -> String {
    for (scale, suffix) in [(1e9, "B"), (1e6, "M"), (1e3, "K")] {
        if v >= scale && (v / scale).fract() == 0.0 {
            return format!("{}{suffix}", v / scale);
        }
    }
    format!("{v}")
}

impl BucketSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidArgument(
                "bucket spec needs at least one edge".into(),
            ));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("bucket edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bucket edges must be strictly increasing".into(),
            ));
        }
        Ok(BucketSpec { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Underflow, one label per `[lo, hi)` bucket, then overflow.
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec![format!("<{}", human(self.edges[0]))];
        out.extend(
            self.edges
                .windows(2)
                .map(|w| format!("{}-{}", human(w[0]), human(w[1]))),
        );
        out.push(format!(
            ">={}",
            human(*self.edges.last().expect("non-empty"))
        ));
        out
    }

    /// Bucket index in `0..=edges.len()`; 0 is underflow and the last is
    /// overflow. NaN goes to overflow.
    pub fn bucket_of(&self, v: f64) -> usize {
        if v.is_nan() {
            return self.edges.len();
        }
        self.edges.partition_point(|&e| e <= v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketDistribution {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    pub empty: bool,
}

impl BucketDistribution {
    /// Fractions of the bounded buckets, without underflow and overflow.
    pub fn inner_fractions(&self) -> &[f64] {
        &self.fractions[1..self.fractions.len() - 1]
    }

    pub fn underflow(&self) -> f64 {
        self.fractions[0]
    }

    pub fn overflow(&self) -> f64 {
        self.fractions[self.fractions.len() - 1]
    }
}

pub fn bucket_distribution(values: &[f64], spec: &BucketSpec) -> BucketDistribution {
    let mut counts = vec![0usize; spec.edges.len() + 1];
    for &v in values {
        counts[spec.bucket_of(v)] += 1;
    }
    let n = values.len();
    let fractions = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    BucketDistribution {
        labels: spec.labels(),
        counts,
        fractions,
        empty: n == 0,
    }
}

/// Reputation comparison of one (account holder, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationRow {
    pub account_holder: String,
    pub target: String,
    pub account_reputation: f64,
    pub target_reputation: f64,
    pub ratio: f64,
    pub pair_count: usize,
}

/// One row per distinct pair in `rep`. Pairs lacking a profile or with an
/// undefined ratio are returned separately with the reason.
pub fn reputation_rows(
    rep: &Repetition,
    profiles: &BTreeMap<String, UserProfile>,
) -> (Vec<ReputationRow>, Vec<(String, String, String)>) {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for ((a, t), &count) in &rep.pair_counts {
        let row = (|| -> Result<ReputationRow> {
            let pa = profiles
                .get(a)
                .ok_or_else(|| Error::MissingProfile(a.clone()))?;
            let pt = profiles
                .get(t)
                .ok_or_else(|| Error::MissingProfile(t.clone()))?;
            Ok(ReputationRow {
                account_holder: a.clone(),
                target: t.clone(),
                account_reputation: reputation(pa)?,
                target_reputation: reputation(pt)?,
                ratio: reputation_ratio(pa, pt)?,
                pair_count: count,
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => skipped.push((a.clone(), t.clone(), e.to_string())),
        }
    }
    (rows, skipped)
}

/// Named word lists; a pattern ending in `*` matches any token starting with
/// the stem.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLexicon {
    categories: BTreeMap<String, Vec<String>>,
}

const SEED_LEXICON: &str = "\
Swear words: shit*, dumb*, bloody, crap, fuck
Work: read, police, political, policy, student*
Achieve: better, win, won, first, best
Leisure: party*, read, running, show, shows
Home: clean*, address, home, family, house*
Money: free, money*, worth, trade*, tax
Religion: sacred, moral, worship*, hell, devil*
Death: war, death*, murder*, kill*, die
Social: you, we, your, our, they
Family: family, families*, pa, mother, ma
Friends: mate, mates, fellow*, lover*, friend*
Humans: people*, human*, women*, children*, woman
Positive Emotions: like, party*, lol, better, support
Negative Emotions: war, wrong*, violent*, liar*, rape*
Anxiety: doubt*, fear, risk*, avoid*, afraid
Anger: war, violent*, liar*, rape*, fight*
Sadness: low*, lost, lose, loser*, fail*
Perceptual: green*, say*, said, watch*, see
See: green*, watch*, see, white*, look
Hear: say*, said, hear, heard, listen
Feel: round*, hard, loose*, hand, feel
Biological: health*, drug*, rape*, life, shit*
Body: shit*, head, brain*, hand, face
Health: health*, drug*, life, weak*, living
";

impl CategoryLexicon {
    pub fn new(categories: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for (name, patterns) in &categories {
            for p in patterns {
                let stem = p.strip_suffix('*').unwrap_or(p);
                if stem.is_empty() || stem.contains('*') {
                    return Err(Error::InvalidArgument(format!(
                        "category {name}: bad pattern {p:?}"
                    )));
                }
                if p.to_lowercase() != *p {
                    return Err(Error::InvalidArgument(format!(
                        "category {name}: pattern {p:?} is not lowercase"
                    )));
                }
            }
        }
        Ok(CategoryLexicon { categories })
    }

    /// Parses `Category: word1, word2, stem*` lines. Blank lines and lines
    /// starting with `#` are ignored; patterns are lowercased.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or_else(|| Error::Record {
                line: n + 1,
                message: "expected `Category: word, ...`".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Record {
                    line: n + 1,
                    message: "empty category name".into(),
                });
            }
            let entry = categories.entry(name.to_string()).or_default();
            for p in rest
                .split(',')
                .map(|p| p.trim().to_lowercase())
                .filter(|p| !p.is_empty())
            {
                if !entry.contains(&p) {
                    entry.push(p);
                }
            }
        }
        Self::new(categories).map_err(|e| Error::Record {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    /// Built-in seed lists with five frequent words per category.
    pub fn seed() -> Self {
        Self::parse(SEED_LEXICON).expect("seed lexicon parses")
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.categories
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

pub fn pattern_matches(pattern: &str, word: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(stem) => word.starts_with(stem),
        None => word == pattern,
    }
}

fn counted(tokens: &[Token]) -> impl Iterator<Item = &str> {
    tokens
        .iter()
        .filter(|t| t.is_word())
        .map(|t| t.lower.trim_start_matches('#'))
}

/// Per category, the share of word tokens matching any of its patterns.
/// Punctuation tokens are not counted; text without words scores 0.
pub fn category_scores(tokens: &TokenSeq, lexicon: &CategoryLexicon) -> BTreeMap<String, f64> {
    let total = counted(&tokens.tokens).count();
    lexicon
        .categories
        .iter()
        .map(|(name, patterns)| {
            let hits = counted(&tokens.tokens)
                .filter(|w| patterns.iter().any(|p| pattern_matches(p, w)))
                .count();
            let ratio = if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            };
            (name.clone(), ratio)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub mean: f64,
    pub se: f64,
    pub users: usize,
}

/// Mean and standard error across users of each user's category ratio, where
/// a user's ratio pools all of their tweets. Users without any word token are
/// left out.
pub fn category_summary(
    users: &[(String, Vec<TokenSeq>)],
    lexicon: &CategoryLexicon,
) -> BTreeMap<String, CategoryStat> {
    let per_user: Vec<BTreeMap<String, f64>> = users
        .par_iter()
        .filter_map(|(_, tweets)| {
            let pooled = TokenSeq {
                tokens: tweets
                    .iter()
                    .flat_map(|t| t.tokens.iter().cloned())
                    .collect(),
            };
            let has_words = pooled.tokens.iter().any(Token::is_word);
            has_words.then(|| category_scores(&pooled, lexicon))
        })
        .collect();
    lexicon
        .categories
        .keys()
        .map(|name| {
            let values: Vec<f64> = per_user.iter().map(|s| s[name]).collect();
            let (mean, se) = mean_se(&values);
            (
                name.clone(),
                CategoryStat {
                    mean,
                    se,
                    users: values.len(),
                },
            )
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `role,times,users` rows for both histograms, singletons as `times=1`.
pub fn write_repetition(path: &Path, rep: &Repetition) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["role", "times", "users"])?;
    for (role, hist, singles) in [
        (
            "account_holder",
            &rep.account_histogram,
            rep.account_singletons,
        ),
        ("target", &rep.target_histogram, rep.target_singletons),
    ] {
        w.write_record([role, "1", &singles.to_string()])?;
        for (times, users) in hist {
            w.write_record([role, &times.to_string(), &users.to_string()])?;
        }
    }
    finish(w, path)
}

/// `series,bucket,count,fraction` rows.
pub fn write_buckets(path: &Path, series: &[(&str, &BucketDistribution)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["series", "bucket", "count", "fraction"])?;
    for (name, d) in series {
        for ((label, count), frac) in d.labels.iter().zip(&d.counts).zip(&d.fractions) {
            w.write_record([name, label.as_str(), &count.to_string(), &frac.to_string()])?;
        }
    }
    finish(w, path)
}

pub fn write_reputation_rows(path: &Path, rows: &[ReputationRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "account_holder",
        "target",
        "account_reputation",
        "target_reputation",
        "ratio",
        "pair_count",
    ])?;
    for r in rows {
        w.write_record([
            r.account_holder.as_str(),
            &r.target,
            &r.account_reputation.to_string(),
            &r.target_reputation.to_string(),
            &r.ratio.to_string(),
            &r.pair_count.to_string(),
        ])?;
    }
    finish(w, path)
}

/// `group,category,mean,se,users` rows.
pub fn write_category_summary(
    path: &Path,
    groups: &[(&str, &BTreeMap<String, CategoryStat>)],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["group", "category", "mean", "se", "users"])?;
    for (group, stats) in groups {
        for (cat, s) in stats.iter() {
            w.write_record([
                group,
                cat.as_str(),
                &s.mean.to_string(),
                &s.se.to_string(),
                &s.users.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(id: &str, followers: u64, friends: u64) -> UserProfile {
        UserProfile {
            user_id: id.into(),
            followers_count: followers,
            friends_count: friends,
            statuses_count: 0,
        }
    }

    #[test]
    fn reputation_examples() {
        assert_eq!(reputation(&profile("a", 300, 100)).unwrap(), 0.75);
        assert!(reputation(&profile("c", 10_000_000, 50)).unwrap() > 0.99999);
        assert!(matches!(
            reputation(&profile("z", 0, 0)),
            Err(Error::UndefinedReputation(_))
        ));
    }

    #[test]
    fn reputation_ratio_examples() {
        // 0.9 and 0.45
        let t = profile("t", 900, 100);
        let a = profile("a", 45, 55);
        assert!((reputation_ratio(&a, &t).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(reputation_ratio(&a, &a).unwrap(), 1.0);
        assert!(reputation_ratio(&profile("a", 0, 5), &t).is_err());
        assert!(reputation_ratio(&a, &profile("t", 0, 0)).is_err());
    }

    #[test]
    fn one_repeat_offender() {
        let incs: Vec<Incident> = (0..3)
            .map(|i| Incident::new(i.to_string(), "bully", &["v"]))
            .collect();
        let rep = repetition_histogram(&incs);
        assert_eq!(rep.account_histogram, BTreeMap::from([(3, 1)]));
        assert_eq!(rep.target_histogram, BTreeMap::from([(3, 1)]));
        assert_eq!(rep.account_singletons, 0);
        assert_eq!(rep.repeat_account_share(), 1.0);
    }

    #[test]
    fn empty_incidents() {
        let rep = repetition_histogram(&[]);
        assert!(rep.account_histogram.is_empty() && rep.target_histogram.is_empty());
        assert_eq!(rep.repeat_target_share(), 0.0);
    }

    #[test]
    fn targets_count_once_per_tweet_and_handles_normalize() {
        let incs = vec![
            Incident::new("1", "@Al", &["@bo", "BO", "al"]),
            Incident::new("2", "al", &["bo", "cy"]),
            Incident::new("2", "al", &["bo"]),
        ];
        let rep = repetition_histogram(&incs);
        assert_eq!(rep.incidents, 2);
        assert_eq!(rep.account_counts, BTreeMap::from([("al".into(), 2)]));
        assert_eq!(
            rep.target_counts,
            BTreeMap::from([("bo".into(), 2), ("cy".into(), 1)])
        );
        assert_eq!(rep.target_singletons, 1);
    }

    #[test]
    fn role_swaps_find_mutual_attacks() {
        let incs = vec![
            Incident::new("1", "a", &["b"]),
            Incident::new("2", "b", &["a"]),
            Incident::new("3", "c", &["a"]),
        ];
        let rep = repetition_histogram(&incs);
        assert_eq!(role_swaps(&rep), vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn thousand_incidents_match_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let incs: Vec<Incident> = (0..1000)
            .map(|i| {
                let a = format!("u{}", rng.gen_range(0..120));
                let ts: Vec<String> = (0..rng.gen_range(1..4))
                    .map(|_| format!("u{}", rng.gen_range(0..120)))
                    .collect();
                Incident {
                    tweet_id: i.to_string(),
                    account_holder: a,
                    targets: ts,
                }
            })
            .collect();
        let rep = repetition_histogram(&incs);
        // oracle: for each user scan all incidents
        let users: BTreeSet<String> = (0..120).map(|i| format!("u{i}")).collect();
        let mut acc = BTreeMap::new();
        let mut tgt = BTreeMap::new();
        for u in &users {
            let as_author = incs.iter().filter(|i| &i.account_holder == u).count();
            let as_target = incs
                .iter()
                .filter(|i| &i.account_holder != u && i.targets.contains(u))
                .count();
            if as_author >= 2 {
                *acc.entry(as_author).or_insert(0) += 1;
            }
            if as_target >= 2 {
                *tgt.entry(as_target).or_insert(0) += 1;
            }
        }
        assert_eq!(rep.account_histogram, acc);
        assert_eq!(rep.target_histogram, tgt);
        let weighted: usize = rep.account_histogram.iter().map(|(c, m)| c * m).sum();
        assert_eq!(weighted + rep.account_singletons, 1000);
    }

    #[test]
    fn bucket_examples() {
        let spec = BucketSpec::new(vec![1.0, 100.0, 1000.0]).unwrap();
        let d = bucket_distribution(&[50.0, 500.0], &spec);
        assert_eq!(d.inner_fractions(), &[0.5, 0.5]);
        assert_eq!((d.underflow(), d.overflow()), (0.0, 0.0));
        let e = bucket_distribution(&[], &spec);
        assert!(e.empty);
        assert!(e.fractions.iter().all(|&f| f == 0.0));
        assert_eq!(spec.bucket_of(100.0), 2);
        assert_eq!(spec.bucket_of(0.0), 0);
        assert_eq!(spec.bucket_of(1000.0), 3);
        assert_eq!(spec.bucket_of(f64::NAN), 3);
    }

    #[test]
    fn default_bucket_labels() {
        let labels = BucketSpec::default().labels();
        assert_eq!(labels.first().unwrap(), "<1");
        assert_eq!(labels[1], "1-100");
        assert_eq!(labels[3], "1K-10K");
        assert_eq!(labels.last().unwrap(), ">=100M");
        assert_eq!(labels.len(), 9);
    }

    #[test]
    fn invalid_bucket_specs() {
        assert!(BucketSpec::new(vec![]).is_err());
        assert!(BucketSpec::new(vec![1.0, 1.0]).is_err());
        assert!(BucketSpec::new(vec![5.0, 2.0]).is_err());
        assert!(BucketSpec::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn reputation_rows_skip_missing_profiles() {
        let rep = repetition_histogram(&[
            Incident::new("1", "a", &["t"]),
            Incident::new("2", "a", &["t", "ghost"]),
        ]);
        let profiles = BTreeMap::from([
            ("a".to_string(), profile("a", 45, 55)),
            ("t".to_string(), profile("t", 900, 100)),
        ]);
        let (rows, skipped) = reputation_rows(&rep, &profiles);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].pair_count, 2);
        assert!((rows[0].ratio - 2.0).abs() < 1e-15);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].1, "ghost");
    }

    #[test]
    fn category_examples() {
        let lex = CategoryLexicon::parse("Anger: war, violent*").unwrap();
        let s = category_scores(&tokenize("the war was violent"), &lex);
        assert_eq!(s["Anger"], 0.5);
        let rel = CategoryLexicon::parse("Religion: worship*").unwrap();
        assert_eq!(
            category_scores(&tokenize("worshipping"), &rel)["Religion"],
            1.0
        );
        assert!(category_scores(&tokenize("a b"), &CategoryLexicon::default()).is_empty());
        assert_eq!(category_scores(&tokenize(""), &lex)["Anger"], 0.0);
        assert_eq!(category_scores(&tokenize("WAR !!"), &lex)["Anger"], 1.0);
    }

    #[test]
    fn lexicon_parsing() {
        let lex = CategoryLexicon::parse(
            "# comment\nSwear words: Shit*, crap\n\nSwear words: crap, dumb*",
        )
        .unwrap();
        assert_eq!(lex.len(), 1);
        let (_, pats) = lex.categories().next().unwrap();
        assert_eq!(pats, ["shit*", "crap", "dumb*"]);
        assert!(CategoryLexicon::parse("no colon here").is_err());
        assert!(CategoryLexicon::parse("X: *").is_err());
        assert!(CategoryLexicon::parse("X: a*b*").is_err());
        let seed = CategoryLexicon::seed();
        assert_eq!(seed.len(), 24);
        assert!(seed.categories().all(|(_, p)| p.len() == 5));
    }

    #[test]
    fn summary_is_mean_and_se_over_users() {
        let lex = CategoryLexicon::parse("A: x").unwrap();
        let users = vec![
            ("u1".to_string(), vec![tokenize("x y"), tokenize("y y")]),
            ("u2".to_string(), vec![tokenize("x")]),
            ("u3".to_string(), vec![tokenize("...")]),
        ];
        let s = category_summary(&users, &lex);
        // u1 pools to 1/4, u2 is 1, u3 has no words
        assert_eq!(s["A"].users, 2);
        assert!((s["A"].mean - 0.625).abs() < 1e-15);
        let sd = ((0.375f64.powi(2) * 2.0) / 1.0).sqrt();
        assert!((s["A"].se - sd / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_outputs_have_headers() {
        let dir = tempfile::tempdir().unwrap();
        let rep = repetition_histogram(&[
            Incident::new("1", "a", &["b"]),
            Incident::new("2", "a", &["b"]),
        ]);
        let p = dir.path().join("rep.csv");
        write_repetition(&p, &rep).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "role,times,users\naccount_holder,1,0\naccount_holder,2,1\ntarget,1,0\ntarget,2,1\n"
        );
        let d = bucket_distribution(&[5.0], &BucketSpec::new(vec![1.0, 10.0]).unwrap());
        let p = dir.path().join("b.csv");
        write_buckets(&p, &[("followers", &d)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text
            .starts_with("series,bucket,count,fraction\nfollowers,<1,0,0\nfollowers,1-10,1,1\n"));
    }

    proptest! {
        #[test]
        fn reputation_in_unit_interval_and_scale_invariant(f in 1u64..1_000_000, r in 1u64..1_000_000, c in 1u64..50) {
            let a = reputation(&profile("u", f, r)).unwrap();
            prop_assert!(a > 0.0 && a < 1.0);
            let b = reputation(&profile("u", c * f, c * r)).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
        }

        #[test]
        fn bucket_fractions_sum_to_one(values in prop::collection::vec(0.0f64..1e9, 1..200)) {
            let d = bucket_distribution(&values, &BucketSpec::default());
            prop_assert!((d.fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(d.counts.iter().sum::<usize>(), values.len());
        }

        #[test]
        fn category_ratios_bounded_and_doubling_invariant(words in prop::collection::vec("[a-z]{1,6}", 0..20)) {
            let lex = CategoryLexicon::parse("A: a*, b\nB: c*, zz").unwrap();
            let text = words.join(" ");
            let once = category_scores(&tokenize(&text), &lex);
            let twice = category_scores(&tokenize(&format!("{text} {text}")), &lex);
            for (k, v) in &once {
                prop_assert!((0.0..=1.0).contains(v));
                prop_assert!((v - twice[k]).abs() <= 1e-15);
            }
        }

        #[test]
        fn repetition_accounts_for_every_incident(seed in any::<u64>(), n in 0usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let incs: Vec<Incident> = (0..n)
                .map(|i| Incident {
                    tweet_id: i.to_string(),
                    account_holder: format!("u{}", rng.gen_range(0..30)),
                    targets: vec![format!("u{}", rng.gen_range(0..30))],
                })
                .collect();
            let rep = repetition_histogram(&incs);
            let weighted: usize = rep.account_histogram.iter().map(|(c, m)| c * m).sum();
            prop_assert_eq!(weighted + rep.account_singletons, n);
        }
    }
}
