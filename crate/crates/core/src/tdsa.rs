//! Target-dependent sentiment classification and per-user entity profiles.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Tweet;
use crate::error::{Error, Result};
use crate::nn::{
    add_linear, add_lstm, softmax, stratified_split, train_loop, Checkpoint, Graph, History,
    LstmIds, Mode, NodeId, ParamId, ParamStore, Tensor, Trainable, TrainingConfig,
    TrainingOverrides,
};
use crate::text::{normalize_entity, tokenize, Recognizer, TokenSeq};

pub const TDSA_MODEL: &str = "td-lstm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    /// Class index in model outputs: negative, neutral, positive.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" | "-1" => Ok(Self::Negative),
            "neutral" | "neu" | "0" => Ok(Self::Neutral),
            "positive" | "pos" | "1" | "+1" => Ok(Self::Positive),
            other => Err(Error::InvalidArgument(format!(
                "unknown sentiment label {other:?}"
            ))),
        }
    }
}

/// A sentence with a target span `[start, end)` over its tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdExample {
    pub tokens: TokenSeq,
    pub start: usize,
    pub end: usize,
    pub label: Option<SentimentLabel>,
}

impl TdExample {
    pub fn new(
        tokens: TokenSeq,
        start: usize,
        end: usize,
        label: Option<SentimentLabel>,
    ) -> Result<Self> {
        check_span(&tokens, start, end)?;
        Ok(TdExample {
            tokens,
            start,
            end,
            label,
        })
    }
}

fn check_span(tokens: &TokenSeq, start: usize, end: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Empty("token list".into()));
    }
    if !(start < end && end <= tokens.len()) {
        return Err(Error::InvalidArgument(format!(
            "target span [{start}, {end}) out of bounds for {} tokens",
            tokens.len()
        )));
    }
    Ok(())
}

/// Loads a TSV of `text<TAB>start<TAB>end<TAB>label`. Token offsets index
/// the whitespace-separated words of `text`.
pub fn load_tdsa_tsv(path: &Path) -> Result<Vec<TdExample>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tdsa_tsv(&raw)
}

pub fn parse_tdsa_tsv(raw: &str) -> Result<Vec<TdExample>> {
    let mut out = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Record {
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let words: Vec<&str> = fields[0].split_whitespace().collect();
        let start: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| bad(format!("start: {e}")))?;
        let end: usize = fields[2]
            .trim()
            .parse()
            .map_err(|e| bad(format!("end: {e}")))?;
        let label: SentimentLabel = fields[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        let ex = TdExample::new(TokenSeq::from_surfaces(&words), start, end, Some(label))
            .map_err(|e| bad(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

/// Pre-trained word vectors plus an out-of-vocabulary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    oov: Vec<f64>,
    index: HashMap<String, usize>,
}

impl WordEmbeddingTable {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut table = WordEmbeddingTable {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            oov: vec![0.0; dim],
            index: HashMap::new(),
        };
        for (word, v) in entries {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "vector for {word:?} has {} values, expected {dim}",
                    v.len()
                )));
            }
            if table.index.contains_key(&word) {
                continue;
            }
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.vectors.extend(v);
        }
        Ok(table)
    }

    /// Uniform(-0.1, 0.1) vectors for the given words.
    pub fn random<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = words
            .iter()
            .map(|w| {
                (
                    w.as_ref().to_string(),
                    (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                )
            })
            .collect();
        Self::new(dim, entries)
    }

    /// Reads `word v1 ... vd` lines. A leading `count dim` header line is
    /// skipped; the first duplicate of a word wins.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut dim = None;
        for (n, line) in raw.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if n == 0
                && rest.len() == 1
                && word.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            let v: Vec<f64> = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Record {
                    line: n + 1,
                    message: format!("bad float: {e}"),
                })?;
            let d = *dim.get_or_insert(v.len());
            if v.len() != d || d == 0 {
                return Err(Error::Record {
                    line: n + 1,
                    message: format!("expected {d} values, found {}", v.len()),
                });
            }
            entries.push((word.to_string(), v));
        }
        let dim = dim.ok_or(Error::EmptyVocabulary)?;
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Row of `word`, trying the surface form and then its lowercase.
    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    pub fn vector(&self, word: &str) -> &[f64] {
        match self.lookup(word) {
            Some(i) => &self.vectors[i * self.dim..(i + 1) * self.dim],
            None => &self.oov,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdLstmConfig {
    pub hidden: usize,
    /// Fine-tune the pre-trained vectors; the OOV vector is always trained.
    pub fine_tune_embeddings: bool,
    /// Fraction of the dataset kept for training when `train_tdsa` carves its
    /// own validation split.
    pub train_fraction: f64,
    /// Fields left out keep the TD-LSTM defaults (learning rate 0.1).
    #[serde(deserialize_with = "td_training")]
    pub training: TrainingConfig,
}

fn td_training<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<TrainingConfig, D::Error> {
    Ok(TrainingOverrides::deserialize(d)?.apply(TdLstmConfig::default().training))
}

impl Default for TdLstmConfig {
    fn default() -> Self {
        TdLstmConfig {
            hidden: 32,
            fine_tune_embeddings: true,
            train_fraction: 0.9,
            training: TrainingConfig {
                learning_rate: 0.1,
                ..TrainingConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TdIds {
    table: ParamId,
    oov: ParamId,
    left: LstmIds,
    right: LstmIds,
    out_w: ParamId,
    out_b: ParamId,
}

impl TdIds {
    fn resolve(params: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
        };
        let lstm = |p: &str| -> Result<LstmIds> {
            let g = ["f", "i", "c", "o"];
            let mut w = Vec::new();
            let mut b = Vec::new();
            for k in g {
                w.push(get(&format!("{p}.w_{k}"))?);
                b.push(get(&format!("{p}.b_{k}"))?);
            }
            Ok(LstmIds {
                w: w.try_into().expect("four gates"),
                b: b.try_into().expect("four gates"),
            })
        };
        Ok(TdIds {
            table: get("embed.words")?,
            oov: get("embed.oov")?,
            left: lstm("left")?,
            right: lstm("right")?,
            out_w: get("out.weight")?,
            out_b: get("out.bias")?,
        })
    }
}

/// TD-LSTM: a left LSTM reads tokens up to and including the target, a
/// right LSTM reads from the target to the end in reverse; their last hidden
/// states are concatenated and mapped to three sentiment classes.
#[derive(Debug, Clone)]
pub struct TdLstm {
    words: Vec<String>,
    index: HashMap<String, usize>,
    params: ParamStore,
    ids: TdIds,
}

impl TdLstm {
    pub fn new(embeddings: &WordEmbeddingTable, config: &TdLstmConfig, seed: u64) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if config.hidden == 0 {
            return Err(Error::InvalidArgument(
                "hidden size must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = embeddings.dim();
        let h = config.hidden;
        let mut params = ParamStore::new();
        params.add(
            "embed.words",
            Tensor::new(vec![embeddings.len(), d], embeddings.vectors.clone())?,
            config.fine_tune_embeddings,
        );
        params.add(
            "embed.oov",
            Tensor::new(
                vec![1, d],
                (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            )?,
            true,
        );
        add_lstm(&mut params, "left", h, d, &mut rng);
        add_lstm(&mut params, "right", h, d, &mut rng);
        add_linear(&mut params, "out", 2 * h, 3, &mut rng);
        let ids = TdIds::resolve(&params)?;
        Ok(TdLstm {
            words: embeddings.words.clone(),
            index: embeddings.index.clone(),
            params,
            ids,
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    fn lookup(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    /// Records the forward pass up to the `[1, 3]` logits.
    pub fn logits(&self, g: &mut Graph<'_>, ex: &TdExample) -> Result<NodeId> {
        check_span(&ex.tokens, ex.start, ex.end)?;
        let rows: Vec<Option<usize>> = ex
            .tokens
            .tokens
            .iter()
            .map(|t| self.lookup(&t.surface))
            .collect();
        let known: Vec<usize> = rows.iter().flatten().copied().collect();
        let known_node = if known.is_empty() {
            None
        } else {
            Some(g.embedding(self.ids.table, &known, None)?)
        };
        let oov_node = if known.len() < rows.len() {
            Some(g.embedding(self.ids.oov, &[0], None)?)
        } else {
            None
        };
        let mut xs = Vec::with_capacity(rows.len());
        let mut k = 0;
        for r in &rows {
            xs.push(match r {
                Some(_) => {
                    k += 1;
                    g.row(known_node.expect("known rows"), k - 1)?
                }
                None => oov_node.expect("oov row"),
            });
        }
        let left = g.lstm_sequence(&self.ids.left, &xs[..ex.end])?;
        let right_in: Vec<NodeId> = xs[ex.start..].iter().rev().copied().collect();
        let right = g.lstm_sequence(&self.ids.right, &right_in)?;
        let both = g.concat(&[left, right])?;
        g.linear(both, self.ids.out_w, self.ids.out_b)
    }

    /// Class distribution over negative, neutral, positive.
    pub fn forward(&self, ex: &TdExample) -> Result<[f64; 3]> {
        let mut g = Graph::new(&self.params, Mode::Eval, 0);
        let logits = self.logits(&mut g, ex)?;
        let p = softmax(g.value(logits).data());
        Ok([p[0], p[1], p[2]])
    }

    pub fn predict(&self, ex: &TdExample) -> Result<SentimentLabel> {
        let p = self.forward(ex)?;
        Ok(SentimentLabel::from_index(argmax(&p)).expect("three classes"))
    }

    pub fn to_checkpoint(&self, seed: u64, config: &TdLstmConfig) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            TDSA_MODEL,
            seed,
            serde_json::to_value(config)?,
            serde_json::to_value(&self.words)?,
            self.params.clone(),
        ))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model(TDSA_MODEL)?;
        let words: Vec<String> = serde_json::from_value(ck.vocab.clone())?;
        let ids = TdIds::resolve(&ck.params)?;
        if ck.params.get(ids.table).shape()[0] != words.len() {
            return Err(Error::VocabularyMismatch(format!(
                "{} words for an embedding table of {} rows",
                words.len(),
                ck.params.get(ids.table).shape()[0]
            )));
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(TdLstm {
            words,
            index,
            params: ck.params.clone(),
            ids,
        })
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl Trainable for TdLstm {
    type Example = TdExample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, g: &mut Graph<'_>, batch: &[&TdExample]) -> Result<NodeId> {
        let mut logits = Vec::with_capacity(batch.len());
        let mut gold = Vec::with_capacity(batch.len());
        for ex in batch {
            let label = ex
                .label
                .ok_or_else(|| Error::InvalidArgument("training example without a label".into()))?;
            logits.push(self.logits(g, ex)?);
            gold.push(label.index());
        }
        let flat = g.concat(&logits)?;
        let stacked = g.reshape(flat, &[batch.len(), 3])?;
        g.softmax_cross_entropy(stacked, &gold)
    }
}

fn check_classes(data: &[TdExample]) -> Result<()> {
    let mut seen = [false; 3];
    for ex in data {
        let l = ex
            .label
            .ok_or_else(|| Error::InvalidArgument("training example without a label".into()))?;
        seen[l.index()] = true;
    }
    match seen.iter().filter(|&&s| s).count() {
        0 => Err(Error::Empty("sentiment dataset".into())),
        1 => Err(Error::SingleClass),
        2 => Err(Error::InvalidArgument(
            "sentiment dataset must cover negative, neutral and positive".into(),
        )),
        _ => Ok(()),
    }
}

/// Trains a TD-LSTM, holding out a stratified validation split for early
/// stopping.
pub fn train_tdsa(
    dataset: &[TdExample],
    embeddings: &WordEmbeddingTable,
    config: &TdLstmConfig,
) -> Result<(TdLstm, History)> {
    check_classes(dataset)?;
    let labels: Vec<SentimentLabel> = dataset.iter().map(|e| e.label.expect("checked")).collect();
    let (tr, va) = stratified_split(&labels, config.train_fraction, config.training.seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>();
    let (train, mut valid) = (pick(&tr), pick(&va));
    if valid.is_empty() {
        valid = train.clone();
    }
    train_tdsa_split(&train, &valid, embeddings, config)
}

pub fn train_tdsa_split(
    train: &[TdExample],
    valid: &[TdExample],
    embeddings: &WordEmbeddingTable,
    config: &TdLstmConfig,
) -> Result<(TdLstm, History)> {
    check_classes(train)?;
    let mut model = TdLstm::new(embeddings, config, config.training.seed)?;
    let history = train_loop(&mut model, train, valid, &config.training)?;
    Ok((model, history))
}

/// Anything that assigns a sentiment to a target span.
pub trait TargetSentiment: Sync {
    fn classify(&self, tokens: &TokenSeq, start: usize, end: usize) -> Result<SentimentLabel>;
}

impl TargetSentiment for TdLstm {
    fn classify(&self, tokens: &TokenSeq, start: usize, end: usize) -> Result<SentimentLabel> {
        self.predict(&TdExample::new(tokens.clone(), start, end, None)?)
    }
}

impl<F> TargetSentiment for F
where
    F: Fn(&TokenSeq, usize, usize) -> SentimentLabel + Sync,
{
    fn classify(&self, tokens: &TokenSeq, start: usize, end: usize) -> Result<SentimentLabel> {
        Ok(self(tokens, start, end))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentCounts {
    pub pos: u64,
    pub neg: u64,
    pub neu: u64,
}

impl SentimentCounts {
    pub fn new(pos: u64, neg: u64, neu: u64) -> Self {
        SentimentCounts { pos, neg, neu }
    }

    pub fn total(&self) -> u64 {
        self.pos + self.neg + self.neu
    }

    pub fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Positive => self.pos += 1,
            SentimentLabel::Negative => self.neg += 1,
            SentimentLabel::Neutral => self.neu += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySentimentProfile {
    pub user_id: String,
    pub counts: BTreeMap<String, SentimentCounts>,
}

impl EntitySentimentProfile {
    pub fn new(user_id: impl Into<String>) -> Self {
        EntitySentimentProfile {
            user_id: user_id.into(),
            counts: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, entity: &str, counts: SentimentCounts) {
        self.counts.insert(normalize_entity(entity), counts);
    }

    pub fn record(&mut self, entity: &str, label: SentimentLabel) {
        self.counts
            .entry(normalize_entity(entity))
            .or_default()
            .add(label);
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(SentimentCounts::total).sum()
    }
}

/// Classifies every recognized entity mention in the tweets and tallies the
/// sentiment per normalized entity.
pub fn profile_user(
    user_id: &str,
    tweets: &[Tweet],
    recognizer: &dyn Recognizer,
    model: &dyn TargetSentiment,
) -> Result<EntitySentimentProfile> {
    let mut profile = EntitySentimentProfile::new(user_id);
    for tweet in tweets {
        let tokens = tokenize(&tweet.text);
        for m in recognizer.recognize(tweet, &tokens) {
            let label = model.classify(&tokens, m.start, m.end)?;
            profile.record(&m.entity, label);
        }
    }
    Ok(profile)
}
