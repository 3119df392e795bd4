//! Hand-crafted baseline features, n-gram vectorization and chi-squared
//! feature selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{FixedOffset, Timelike};
use serde::{Deserialize, Serialize};

use crate::corpus::{Lexicon, Tweet};
use crate::error::{Error, Result};
use crate::text::{detect_negation, is_punct, ngrams_of, tokenize, word_tokens, TokenSeq};

pub const CONTENT_SCHEMA: &str = "content-v1";
pub const TEXTUAL_SCHEMA: &str = "textual-v1";

pub const CONTENT_NAMES: [&str; 5] = [
    "word_count",
    "offensive_word_count",
    "severity",
    "hour_of_day",
    "negation",
];

pub const TEXTUAL_NAMES: [&str; 10] = [
    "n_words",
    "n_chars",
    "n_sentences",
    "avg_word_len",
    "avg_sentence_len",
    "profane_ratio",
    "uppercase_per_sentence",
    "punct_per_sentence",
    "url_ratio",
    "mention_ratio",
];

/// Default number of features kept by chi-squared selection.
pub const DEFAULT_CHI2_K: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sum of per-word severities over every lexicon-word occurrence.
pub fn severity(tweet: &Tweet, lexicon: &Lexicon) -> u32 {
    word_tokens(&tweet.text)
        .iter()
        .filter_map(|w| lexicon.severity(w))
        .map(u32::from)
        .sum()
}

pub fn offensive_word_count(tweet: &Tweet, lexicon: &Lexicon) -> usize {
    word_tokens(&tweet.text)
        .iter()
        .filter(|w| lexicon.contains(w))
        .count()
}

/// Word count, offensive-word count, severity, posting hour and negation
/// flag. The hour is taken in UTC shifted by `utc_offset_hours`.
pub fn content_features(tweet: &Tweet, lexicon: &Lexicon) -> Result<FeatureVector> {
    content_features_at(tweet, lexicon, 0)
}

pub fn content_features_at(
    tweet: &Tweet,
    lexicon: &Lexicon,
    utc_offset_hours: i32,
) -> Result<FeatureVector> {
    let offset = FixedOffset::east_opt(utc_offset_hours * 3600).ok_or_else(|| {
        Error::InvalidArgument(format!("utc offset {utc_offset_hours}h out of range"))
    })?;
    let words = word_tokens(&tweet.text);
    let hour = tweet.created_at.with_timezone(&offset).hour();
    let negated = detect_negation(&tokenize(&tweet.text), lexicon, 3)?;
    Ok(FeatureVector {
        values: vec![
            words.len() as f64,
            offensive_word_count(tweet, lexicon) as f64,
            f64::from(severity(tweet, lexicon)),
            f64::from(hour),
            if negated { 1.0 } else { 0.0 },
        ],
        schema_id: CONTENT_SCHEMA.into(),
    })
}

fn sentence_count(text: &str) -> usize {
    if text.trim().is_empty() {
        return 0;
    }
    text.split(['.', '!', '?'])
        .filter(|s| !s.trim().is_empty())
        .count()
        .max(1)
}

fn is_url(chunk: &str) -> bool {
    let c = chunk.to_ascii_lowercase();
    c.starts_with("http://") || c.starts_with("https://") || c.starts_with("www.")
}

/// The ten textual features: counts of words, characters and sentences
/// followed by seven ratios. Any ratio with a zero denominator is 0.
pub fn textual_features(tweet: &Tweet, lexicon: &Lexicon) -> FeatureVector {
    let text = &tweet.text;
    let words = word_tokens(text).len() as f64;
    let chars = text.chars().count() as f64;
    let sentences = sentence_count(text) as f64;
    let profane = offensive_word_count(tweet, lexicon) as f64;
    let upper = text.chars().filter(|c| c.is_uppercase()).count() as f64;
    let punct = text.chars().filter(|c| is_punct(*c)).count() as f64;
    let chunks: Vec<&str> = text.split_whitespace().collect();
    let urls = chunks.iter().filter(|c| is_url(c)).count() as f64;
    let mentions = chunks
        .iter()
        .filter(|c| c.starts_with('@') && c.len() > 1)
        .count() as f64;
    FeatureVector {
        values: vec![
            words,
            chars,
            sentences,
            ratio(chars, words),
            ratio(words, sentences),
            ratio(profane, words),
            ratio(upper, sentences),
            ratio(punct, sentences),
            ratio(urls, words),
            ratio(mentions, words),
        ],
        schema_id: TEXTUAL_SCHEMA.into(),
    }
}

/// Bag-of-n-grams vocabulary with optional chi-squared column selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerModel {
    pub version: u32,
    pub n_values: Vec<usize>,
    pub min_df: usize,
    /// Feature strings in column order.
    pub features: Vec<String>,
    pub doc_freq: Vec<usize>,
    /// Columns kept by selection, in output order. All columns when no
    /// selection was applied.
    pub selected: Vec<usize>,
    /// Chi-squared score per column, present after selection.
    pub scores: Option<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn doc_ngrams(tokens: &TokenSeq, n_values: &BTreeSet<usize>) -> Result<BTreeMap<String, usize>> {
    let lowers: Vec<&str> = tokens.lowers().collect();
    ngrams_of(&lowers, n_values)
}

/// Builds the vocabulary of n-grams found in at least `min_df` documents.
/// Columns are ordered by descending document frequency, ties
/// lexicographically.
pub fn fit_vectorizer(
    corpus: &[TokenSeq],
    n_values: &BTreeSet<usize>,
    min_df: usize,
) -> Result<VectorizerModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("vectorizer corpus".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        for gram in doc_ngrams(doc, n_values)?.into_keys() {
            *df.entry(gram).or_default() += 1;
        }
    }
    let mut vocab: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= min_df).collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    // BTreeMap order is lexicographic, so a stable sort keeps the tie rule
    vocab.sort_by_key(|e| std::cmp::Reverse(e.1));
    let (features, doc_freq): (Vec<_>, Vec<_>) = vocab.into_iter().unzip();
    let mut model = VectorizerModel {
        version: 1,
        n_values: n_values.iter().copied().collect(),
        min_df,
        selected: (0..features.len()).collect(),
        features,
        doc_freq,
        scores: None,
        index: HashMap::new(),
    };
    model.rebuild_index();
    Ok(model)
}

impl VectorizerModel {
    fn rebuild_index(&mut self) {
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
    }

    pub fn n_columns(&self) -> usize {
        self.features.len()
    }

    /// Width of the transformed vector.
    pub fn output_dim(&self) -> usize {
        self.selected.len()
    }

    pub fn column(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    /// Raw counts over every vocabulary column.
    pub fn counts(&self, tokens: &TokenSeq) -> Result<Vec<f64>> {
        let n_values: BTreeSet<usize> = self.n_values.iter().copied().collect();
        let mut row = vec![0.0; self.features.len()];
        for (gram, n) in doc_ngrams(tokens, &n_values)? {
            if let Some(c) = self.column(&gram) {
                row[c] = n as f64;
            }
        }
        Ok(row)
    }

    /// Counts restricted to the selected columns.
    pub fn transform(&self, tokens: &TokenSeq) -> Result<Vec<f64>> {
        let row = self.counts(tokens)?;
        Ok(self.selected.iter().map(|&c| row[c]).collect())
    }

    /// Keeps the `k` columns with the highest chi-squared score against `y`.
    pub fn select_chi2(mut self, x: &[Vec<f64>], y: &[bool], k: usize) -> Result<Self> {
        let sel = chi2_select(x, y, k)?;
        if sel.scores.len() != self.features.len() {
            return Err(Error::Shape(format!(
                "document-term matrix has {} columns, vocabulary has {}",
                sel.scores.len(),
                self.features.len()
            )));
        }
        self.selected = sel.selected;
        self.scores = Some(sel.scores);
        Ok(self)
    }

    /// Same selection as [`Self::select_chi2`], computed from the documents
    /// directly without a dense document-term matrix.
    pub fn select_chi2_docs(mut self, docs: &[TokenSeq], y: &[bool], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("chi2 k must be positive".into()));
        }
        if docs.len() != y.len() || docs.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 documents with one label each, got {} documents and {} labels",
                docs.len(),
                y.len()
            )));
        }
        let n_pos = y.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == y.len() {
            return Err(Error::SingleClass);
        }
        let n_values: BTreeSet<usize> = self.n_values.iter().copied().collect();
        let mut present = vec![(0.0f64, 0.0f64); self.features.len()];
        for (doc, &label) in docs.iter().zip(y) {
            for gram in doc_ngrams(doc, &n_values)?.into_keys() {
                if let Some(c) = self.column(&gram) {
                    if label {
                        present[c].0 += 1.0;
                    } else {
                        present[c].1 += 1.0;
                    }
                }
            }
        }
        let sel = rank_presence(&present, n_pos as f64, (y.len() - n_pos) as f64, k);
        self.selected = sel.selected;
        self.scores = Some(sel.scores);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let mut model: VectorizerModel = serde_json::from_str(raw)?;
        if model.version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported vectorizer version {}",
                model.version
            )));
        }
        if model.selected.iter().any(|&c| c >= model.features.len()) {
            return Err(Error::Checkpoint("selected column out of range".into()));
        }
        model.rebuild_index();
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Selection {
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Chi-squared statistic of the 2x2 presence-by-label contingency table.
/// Cells with zero expected count contribute nothing.
pub fn chi2_score(present_pos: f64, present_neg: f64, n_pos: f64, n_neg: f64) -> f64 {
    let n = n_pos + n_neg;
    let present = present_pos + present_neg;
    let absent = n - present;
    let observed = [
        (present_pos, present, n_pos),
        (present_neg, present, n_neg),
        (n_pos - present_pos, absent, n_pos),
        (n_neg - present_neg, absent, n_neg),
    ];
    observed
        .iter()
        .map(|&(o, row, col)| {
            let e = row * col / n;
            if e > 0.0 {
                (o - e).powi(2) / e
            } else {
                0.0
            }
        })
        .sum()
}

/// Scores every column of `x` and keeps the top `k` (ties by column order).
pub fn chi2_select(x: &[Vec<f64>], y: &[bool], k: usize) -> Result<Chi2Selection> {
    if k == 0 {
        return Err(Error::InvalidArgument("chi2 k must be positive".into()));
    }
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 documents with one label each, got {} rows and {} labels",
            x.len(),
            y.len()
        )));
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::SingleClass);
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::Shape("ragged document-term matrix".into()));
    }
    let mut present = vec![(0.0f64, 0.0f64); width];
    for (row, &label) in x.iter().zip(y) {
        for (c, &v) in row.iter().enumerate() {
            if v > 0.0 {
                if label {
                    present[c].0 += 1.0;
                } else {
                    present[c].1 += 1.0;
                }
            }
        }
    }
    Ok(rank_presence(
        &present,
        n_pos as f64,
        (y.len() - n_pos) as f64,
        k,
    ))
}

/// Per-column (positive, negative) document presence counts to scores and
/// the top `k` columns.
fn rank_presence(present: &[(f64, f64)], n_pos: f64, n_neg: f64, k: usize) -> Chi2Selection {
    let scores: Vec<f64> = present
        .iter()
        .map(|&(p, q)| chi2_score(p, q, n_pos, n_neg))
        .collect();
    let mut order: Vec<usize> = (0..present.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Chi2Selection {
        scores,
        selected: order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_lexicon;
    use crate::text::tokenize;
    use proptest::prelude::*;

    fn tweet(text: &str, at: &str) -> Tweet {
        Tweet::new("1", "u", text, at).unwrap()
    }

    #[test]
    fn severity_counts_multiplicity() {
        let lex = parse_lexicon("idiot\t1\nf**k\t2").unwrap();
        assert_eq!(
            severity(&tweet("you idiot idiot", "2017-01-01T00:00:00Z"), &lex),
            2
        );
        assert_eq!(
            severity(&tweet("f**k you idiot", "2017-01-01T00:00:00Z"), &lex),
            3
        );
        assert_eq!(
            severity(&tweet("nice day", "2017-01-01T00:00:00Z"), &lex),
            0
        );
    }

    #[test]
    fn content_feature_examples() {
        let lex = parse_lexicon("idiot\t1").unwrap();
        let f = content_features(&tweet("you idiot", "2017-08-01T14:30:00Z"), &lex).unwrap();
        assert_eq!(f.values, [2.0, 1.0, 1.0, 14.0, 0.0]);

        let die = parse_lexicon("die\t1").unwrap();
        let f =
            content_features(&tweet("Please don't die.", "2017-08-01T02:05:00Z"), &die).unwrap();
        assert_eq!(f.values, [3.0, 1.0, 1.0, 2.0, 1.0]);

        let f = content_features(&tweet("", "2017-08-01T00:00:00Z"), &lex).unwrap();
        assert_eq!(f.values, [0.0; 5]);

        let f = content_features_at(&tweet("x", "2017-08-01T23:00:00Z"), &lex, 2).unwrap();
        assert_eq!(f.values[3], 1.0);
    }

    #[test]
    fn textual_feature_examples() {
        let lex = parse_lexicon("idiot\t1").unwrap();
        let f = textual_features(&tweet("You idiot!", "2017-01-01T00:00:00Z"), &lex);
        assert_eq!(&f.values[..6], &[2.0, 10.0, 1.0, 5.0, 2.0, 0.5]);
        assert_eq!(f.values[6], 1.0);
        assert_eq!(f.values[7], 1.0);

        let f = textual_features(&tweet("", "2017-01-01T00:00:00Z"), &lex);
        assert_eq!(f.values, [0.0; 10]);

        let f = textual_features(&tweet("Go. Stop.", "2017-01-01T00:00:00Z"), &lex);
        assert_eq!(f.values[2], 2.0);
        assert_eq!(f.values[4], 1.0);

        let f = textual_features(
            &tweet("@bob see https://x.co now", "2017-01-01T00:00:00Z"),
            &lex,
        );
        assert_eq!(f.values[8], 0.25);
        assert_eq!(f.values[9], 0.25);
    }

    fn docs(texts: &[&str]) -> Vec<TokenSeq> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn vectorizer_vocabulary_and_order() {
        let corpus = docs(&["a b", "a c"]);
        let m = fit_vectorizer(&corpus, &BTreeSet::from([1]), 2).unwrap();
        assert_eq!(m.features, ["a"]);
        let m = fit_vectorizer(&corpus, &BTreeSet::from([1]), 1).unwrap();
        assert_eq!(m.features, ["a", "b", "c"]);
        assert!(fit_vectorizer(&[], &BTreeSet::from([1]), 1).is_err());
        assert!(matches!(
            fit_vectorizer(&corpus, &BTreeSet::from([1]), 3),
            Err(Error::EmptyVocabulary)
        ));
        assert_eq!(m.transform(&tokenize("zz yy")).unwrap(), [0.0; 3]);
        assert_eq!(m.transform(&tokenize("c c a")).unwrap(), [1.0, 0.0, 2.0]);
    }

    #[test]
    fn vectorizer_json_roundtrip() {
        let corpus = docs(&["a b", "a c", "b c"]);
        let m = fit_vectorizer(&corpus, &BTreeSet::from([1, 2]), 1).unwrap();
        let x: Vec<_> = corpus.iter().map(|d| m.counts(d).unwrap()).collect();
        let m = m.select_chi2(&x, &[true, false, false], 2).unwrap();
        let back = VectorizerModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.selected, m.selected);
        assert_eq!(
            back.transform(&tokenize("a b")).unwrap(),
            m.transform(&tokenize("a b")).unwrap()
        );
    }

    #[test]
    fn chi2_examples() {
        let mut x = vec![vec![1.0]; 10];
        x.extend(vec![vec![0.0]; 10]);
        let mut y = vec![true; 10];
        y.extend(vec![false; 10]);
        let sel = chi2_select(&x, &y, 1).unwrap();
        assert_eq!(sel.scores[0], 20.0);

        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i % 10 < 5 { 1.0 } else { 0.0 }])
            .collect();
        assert_eq!(chi2_select(&x, &y, 1).unwrap().scores[0], 0.0);

        assert!(chi2_select(&x, &y, 0).is_err());
        assert!(matches!(
            chi2_select(&x, &[true; 20], 1),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn chi2_ties_follow_column_order() {
        let x = vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let sel = chi2_select(&x, &[true, false], 3).unwrap();
        assert_eq!(sel.selected, [0, 1, 2]);
    }

    proptest! {
        #[test]
        fn severity_bounded_by_counts(words in proptest::collection::vec(prop_oneof!["idiot", "f**k", "nice", "day"], 0..10)) {
            let lex = parse_lexicon("idiot\t1\nf**k\t2").unwrap();
            let t = tweet(&words.join(" "), "2017-01-01T00:00:00Z");
            let s = severity(&t, &lex) as usize;
            let c = offensive_word_count(&t, &lex);
            prop_assert!(c <= s && s <= 2 * c);
        }

        #[test]
        fn textual_ratios_scale_consistent(words in proptest::collection::vec("[A-Za-z]{1,6}[.!]?", 1..8)) {
            let lex = parse_lexicon("idiot").unwrap();
            let text = format!("{}.", words.join(" "));
            let doubled = format!("{text} {text}");
            let a = textual_features(&tweet(&text, "2017-01-01T00:00:00Z"), &lex).values;
            let b = textual_features(&tweet(&doubled, "2017-01-01T00:00:00Z"), &lex).values;
            prop_assert_eq!(b[0], 2.0 * a[0]);
            prop_assert_eq!(b[1], 2.0 * a[1] + 1.0);
            prop_assert_eq!(b[2], 2.0 * a[2]);
            for i in [4usize, 5, 6, 7] {
                prop_assert!((a[i] - b[i]).abs() < 1e-12, "feature {} {} vs {}", i, a[i], b[i]);
            }
        }

        #[test]
        fn chi2_permutation_invariant(rows in proptest::collection::vec((proptest::collection::vec(0u8..3, 4), any::<bool>()), 2..30), seed in any::<u64>()) {
            let mut x: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.iter().map(|&v| f64::from(v)).collect()).collect();
            let mut y: Vec<bool> = rows.iter().map(|(_, l)| *l).collect();
            prop_assume!(y.iter().any(|&l| l) && y.iter().any(|&l| !l));
            let a = chi2_select(&x, &y, 2).unwrap();
            let mut idx: Vec<usize> = (0..x.len()).collect();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            x = idx.iter().map(|&i| x[i].clone()).collect();
            y = idx.iter().map(|&i| y[i]).collect();
            let b = chi2_select(&x, &y, 2).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sparse_chi2_matches_dense(docs_raw in proptest::collection::vec((proptest::collection::vec(0usize..6, 1..6), any::<bool>()), 2..25), k in 1usize..8) {
            const WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
            let y: Vec<bool> = docs_raw.iter().map(|(_, l)| *l).collect();
            prop_assume!(y.iter().any(|&l| l) && y.iter().any(|&l| !l));
            let corpus: Vec<TokenSeq> = docs_raw
                .iter()
                .map(|(ws, _)| TokenSeq::from_surfaces(&ws.iter().map(|&w| WORDS[w]).collect::<Vec<_>>()))
                .collect();
            let m = fit_vectorizer(&corpus, &BTreeSet::from([1, 2]), 1).unwrap();
            let x: Vec<_> = corpus.iter().map(|d| m.counts(d).unwrap()).collect();
            let dense = m.clone().select_chi2(&x, &y, k).unwrap();
            let sparse = m.select_chi2_docs(&corpus, &y, k).unwrap();
            prop_assert_eq!(dense.selected, sparse.selected);
            prop_assert_eq!(dense.scores, sparse.scores);
        }
    }
}
