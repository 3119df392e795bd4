//! Corpus data model, file ingestion, lexicon/mention filtering and
//! incivility-context construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{extract_mentions, normalize_user, word_tokens};

/// Default number of timeline tweets kept per user in an incivility context.
pub const DEFAULT_CONTEXT_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub id: String,
    pub author_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub mentions: Vec<String>,
    pub in_reply_to: Option<String>,
}

/// On-disk JSONL record.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TweetRecord {
    id: String,
    author_id: String,
    text: String,
    created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mentions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_reply_to: Option<String>,
}

fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::InvalidArgument(format!("bad timestamp {raw:?}: {e}")))
}

fn dedup_normalized(handles: impl IntoIterator<Item = impl AsRef<str>>) -> Vec<String> {
    let mut seen = HashSet::new();
    handles
        .into_iter()
        .map(|h| normalize_user(h.as_ref()))
        .filter(|h| !h.is_empty() && seen.insert(h.clone()))
        .collect()
}

impl Tweet {
    /// Builds a tweet whose mentions are extracted from the text.
    pub fn new(
        id: impl Into<String>,
        author_id: impl Into<String>,
        text: impl Into<String>,
        created_at: &str,
    ) -> Result<Self> {
        let text = text.into();
        let mentions = extract_mentions(&text);
        Self::with_mentions(id, author_id, text, created_at, mentions)
    }

    pub fn with_mentions(
        id: impl Into<String>,
        author_id: impl Into<String>,
        text: impl Into<String>,
        created_at: &str,
        mentions: Vec<String>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidArgument("tweet id is empty".into()));
        }
        Ok(Tweet {
            id,
            author_id: author_id.into(),
            text: text.into(),
            created_at: parse_timestamp(created_at)?,
            mentions: dedup_normalized(mentions),
            in_reply_to: None,
        })
    }

    fn from_record(rec: TweetRecord) -> Result<Self> {
        let mut tweet = match rec.mentions {
            Some(m) => Tweet::with_mentions(rec.id, rec.author_id, rec.text, &rec.created_at, m)?,
            None => Tweet::new(rec.id, rec.author_id, rec.text, &rec.created_at)?,
        };
        tweet.in_reply_to = rec.in_reply_to;
        Ok(tweet)
    }

    fn to_record(&self) -> TweetRecord {
        TweetRecord {
            id: self.id.clone(),
            author_id: self.author_id.clone(),
            text: self.text.clone(),
            created_at: self.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            mentions: Some(self.mentions.clone()),
            in_reply_to: self.in_reply_to.clone(),
        }
    }

    /// Normalized author handle, comparable with mentions.
    pub fn author(&self) -> String {
        normalize_user(&self.author_id)
    }
}

/// A record that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
}

/// Reads a JSONL file line by line, collecting per-record failures. Blank
/// lines are skipped. Fails as a whole when more than 10% of the records are
/// malformed.
fn load_jsonl<T, R>(path: &Path, convert: impl Fn(R) -> Result<T>) -> Result<LoadReport<T>>
where
    R: for<'de> Deserialize<'de>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport {
        records: Vec::new(),
        errors: Vec::new(),
    };
    let mut total = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = serde_json::from_str::<R>(&line)
            .map_err(Error::from)
            .and_then(&convert);
        match parsed {
            Ok(rec) => report.records.push(rec),
            Err(e) => report.errors.push(RecordError {
                line: n + 1,
                message: e.to_string(),
            }),
        }
    }
    if report.errors.len() * 10 > total {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: report.errors.len(),
            total,
        });
    }
    Ok(report)
}

pub fn load_tweets(path: &Path) -> Result<LoadReport<Tweet>> {
    load_jsonl(path, Tweet::from_record)
}

pub fn save_tweets(path: &Path, tweets: &[Tweet]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in tweets {
        serde_json::to_writer(&mut w, &t.to_record())?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub followers_count: u64,
    pub friends_count: u64,
    pub statuses_count: u64,
}

pub fn load_profiles(path: &Path) -> Result<LoadReport<UserProfile>> {
    load_jsonl(path, |p: UserProfile| {
        Ok(UserProfile {
            user_id: normalize_user(&p.user_id),
            ..p
        })
    })
}

/// A user's tweets, newest first, unique by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    user_id: String,
    tweets: Vec<Tweet>,
}

impl Timeline {
    pub fn new(user_id: &str, mut tweets: Vec<Tweet>) -> Result<Self> {
        let user_id = normalize_user(user_id);
        if let Some(t) = tweets.iter().find(|t| t.author() != user_id) {
            return Err(Error::InvalidArgument(format!(
                "tweet {} by {} does not belong to timeline of {user_id}",
                t.id, t.author_id
            )));
        }
        let mut seen = HashSet::new();
        tweets.retain(|t| seen.insert(t.id.clone()));
        // stable: equal timestamps keep input order
        tweets.sort_by_key(|t| std::cmp::Reverse(t.created_at));
        Ok(Timeline { user_id, tweets })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }
}

/// Groups a flat tweet list into per-author timelines.
pub fn group_timelines(tweets: Vec<Tweet>) -> BTreeMap<String, Timeline> {
    let mut by_user: BTreeMap<String, Vec<Tweet>> = BTreeMap::new();
    for t in tweets {
        by_user.entry(t.author()).or_default().push(t);
    }
    by_user
        .into_iter()
        .map(|(user, tweets)| {
            let tl = Timeline::new(&user, tweets).expect("grouped by author");
            (user, tl)
        })
        .collect()
}

/// Offensive-word lexicon with per-word severity in {1, 2}.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, u8>,
}

impl Lexicon {
    /// Builds a lexicon; words are lowercased and duplicates keep the higher
    /// severity.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u8)>) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (n, (word, sev)) in entries.into_iter().enumerate() {
            lex.insert(n + 1, &word, sev)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, line: usize, word: &str, severity: u8) -> Result<()> {
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err(Error::EmptyWord { line });
        }
        if word.chars().any(char::is_whitespace) {
            return Err(Error::Record {
                line,
                message: format!("lexicon word {word:?} contains whitespace"),
            });
        }
        if !(1..=2).contains(&severity) {
            return Err(Error::InvalidSeverity {
                line,
                value: severity.to_string(),
            });
        }
        let slot = self.entries.entry(word).or_insert(severity);
        *slot = (*slot).max(severity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn severity(&self, word: &str) -> Option<u8> {
        self.entries.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u8)> {
        self.entries.iter().map(|(w, s)| (w.as_str(), *s))
    }
}

/// Loads a `word<TAB>severity` file. A missing severity column means 1.
pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&raw)
}

pub fn parse_lexicon(raw: &str) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let word = cols.next().unwrap_or_default();
        let severity = match cols.next().map(str::trim) {
            None | Some("") => 1,
            Some(raw) => match raw.parse::<u8>() {
                Ok(v) => v,
                Err(_) => {
                    return Err(Error::InvalidSeverity {
                        line: line_no,
                        value: raw.to_string(),
                    })
                }
            },
        };
        lex.insert(line_no, word, severity)?;
    }
    Ok(lex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Civil,
    Incivil,
}

impl Label {
    pub fn is_incivil(self) -> bool {
        self == Label::Incivil
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Civil => "civil",
            Label::Incivil => "incivil",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "civil" => Ok(Label::Civil),
            "incivil" => Ok(Label::Incivil),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

/// A labeled tweet. Columns beyond `tweet_id,label` are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTweet {
    pub tweet_id: String,
    pub label: Label,
    pub extra: BTreeMap<String, String>,
}

pub fn load_labels(path: &Path) -> Result<Vec<LabeledTweet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file)
}

pub fn read_labels(reader: impl std::io::Read) -> Result<Vec<LabeledTweet>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers.iter().position(|h| h == "tweet_id");
    let label_col = headers.iter().position(|h| h == "label");
    let (Some(id_col), Some(label_col)) = (id_col, label_col) else {
        return Err(Error::Record {
            line: 1,
            message: "label file header must contain tweet_id and label".into(),
        });
    };
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
        let label = field(label_col).parse().map_err(|e: Error| Error::Record {
            line,
            message: e.to_string(),
        })?;
        let extra = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_col && *i != label_col)
            .map(|(i, h)| (h.to_string(), field(i)))
            .collect();
        out.push(LabeledTweet {
            tweet_id: field(id_col),
            label,
            extra,
        });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[LabeledTweet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tweet_id", "label"])?;
    for l in labels {
        w.write_record([l.tweet_id.as_str(), l.label.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Keeps tweets containing at least one lexicon word, in order.
pub fn offensive_filter(tweets: &[Tweet], lexicon: &Lexicon) -> Vec<Tweet> {
    tweets
        .iter()
        .filter(|t| offensive_witness(t, lexicon).is_some())
        .cloned()
        .collect()
}

/// First token of the tweet found in the lexicon, if any.
pub fn offensive_witness(tweet: &Tweet, lexicon: &Lexicon) -> Option<String> {
    word_tokens(&tweet.text)
        .into_iter()
        .find(|w| lexicon.contains(w))
}

/// Keeps tweets with at least one mention, in order.
pub fn mention_filter(tweets: &[Tweet]) -> Vec<Tweet> {
    tweets
        .iter()
        .filter(|t| !t.mentions.is_empty())
        .cloned()
        .collect()
}

/// The author of a tweet and the users it targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncivilityPair {
    pub account_holder: String,
    pub targets: Vec<String>,
}

pub fn extract_pairs(tweet: &Tweet) -> Result<IncivilityPair> {
    if tweet.mentions.is_empty() {
        return Err(Error::NoTargets(tweet.id.clone()));
    }
    let author = tweet.author();
    let targets = dedup_normalized(&tweet.mentions)
        .into_iter()
        .filter(|m| *m != author)
        .collect::<Vec<_>>();
    if targets.is_empty() {
        return Err(Error::SelfMentionOnly(tweet.id.clone()));
    }
    Ok(IncivilityPair {
        account_holder: author,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncivilityContext {
    pub tweet_id: String,
    pub account_holder_id: String,
    pub target_ids: Vec<String>,
    pub account_context: Vec<Tweet>,
    pub target_contexts: BTreeMap<String, Vec<Tweet>>,
    /// Users for which no timeline was available.
    pub missing_timelines: BTreeSet<String>,
}

impl IncivilityContext {
    pub fn has_warnings(&self) -> bool {
        !self.missing_timelines.is_empty()
    }
}

/// Takes the `k` newest tweets of the account holder and of every target.
/// Missing timelines yield empty contexts and are recorded, not fatal.
pub fn build_context(
    tweet: &Tweet,
    timelines: &BTreeMap<String, Timeline>,
    k: usize,
) -> Result<IncivilityContext> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "context size k must be positive".into(),
        ));
    }
    let pair = extract_pairs(tweet)?;
    let mut missing = BTreeSet::new();
    let mut slice = |user: &str| match timelines.get(user) {
        Some(tl) => tl.tweets().iter().take(k).cloned().collect(),
        None => {
            missing.insert(user.to_string());
            Vec::new()
        }
    };
    let account_context = slice(&pair.account_holder);
    let target_contexts = pair.targets.iter().map(|t| (t.clone(), slice(t))).collect();
    if !missing.is_empty() {
        log::warn!("tweet {}: no timeline for {:?}", tweet.id, missing);
    }
    Ok(IncivilityContext {
        tweet_id: tweet.id.clone(),
        account_holder_id: pair.account_holder,
        target_ids: pair.targets,
        account_context,
        target_contexts,
        missing_timelines: missing,
    })
}
