//! Tokenization, character encoding, n-grams, negation cues and a rule-based
//! entity recognizer.
//!
//! Two tokenizers live here. [`tokenize`] keeps punctuation runs as their own
//! tokens and preserves case; it feeds entity detection, negation detection
//! and the sentiment model. [`word_tokens`] is the lossy lowercase variant used
//! for lexicon filtering and word-count features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Lexicon, Tweet};
use crate::error::{Error, Result};

/// Reserved padding index.
pub const PAD: usize = 0;
/// Reserved unknown-character index.
pub const UNK: usize = 1;

/// Default maximum tweet length in characters.
pub const DEFAULT_MAX_LEN: usize = 280;

pub(crate) fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{00A1}'
                | '\u{00BF}'
                | '\u{2013}'
                | '\u{2014}'
        )
}

/// One token with its original surface, lowercase form and code-point span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    fn new(surface: String, start: usize) -> Self {
        let end = start + surface.chars().count();
        let lower = surface.to_lowercase();
        Token {
            surface,
            lower,
            start,
            end,
        }
    }

    pub fn is_punct(&self) -> bool {
        self.surface.chars().all(is_punct)
    }

    pub fn is_mention(&self) -> bool {
        self.surface.starts_with('@') && self.surface.chars().count() > 1
    }

    pub fn is_hashtag(&self) -> bool {
        self.surface.starts_with('#') && self.surface.chars().count() > 1
    }

    /// True when the token carries at least one letter or digit.
    pub fn is_word(&self) -> bool {
        self.surface.chars().any(char::is_alphanumeric)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn lowers(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lower.as_str())
    }

    /// Builds a sequence from already-split surfaces, assigning spans as if
    /// they were joined by single spaces.
    pub fn from_surfaces<S: AsRef<str>>(surfaces: &[S]) -> Self {
        let mut pos = 0;
        let tokens = surfaces
            .iter()
            .map(|s| {
                let t = Token::new(s.as_ref().to_string(), pos);
                pos = t.end + 1;
                t
            })
            .collect();
        TokenSeq { tokens }
    }
}

/// Splits on whitespace and peels leading/trailing punctuation runs off into
/// their own tokens. `@mention` and `#hashtag` chunks are kept whole.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut chunk = String::new();
    let mut chunk_start = 0;
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !chunk.is_empty() {
                split_chunk(&std::mem::take(&mut chunk), chunk_start, &mut tokens);
            }
        } else {
            if chunk.is_empty() {
                chunk_start = pos;
            }
            chunk.push(c);
        }
    }
    if !chunk.is_empty() {
        split_chunk(&chunk, chunk_start, &mut tokens);
    }
    TokenSeq { tokens }
}

fn split_chunk(chunk: &str, start: usize, out: &mut Vec<Token>) {
    if chunk.starts_with('@') || chunk.starts_with('#') {
        out.push(Token::new(chunk.to_string(), start));
        return;
    }
    let chars: Vec<char> = chunk.chars().collect();
    let lead = chars.iter().take_while(|c| is_punct(**c)).count();
    if lead == chars.len() {
        out.push(Token::new(chunk.to_string(), start));
        return;
    }
    let trail = chars.iter().rev().take_while(|c| is_punct(**c)).count();
    let core_end = chars.len() - trail;
    if lead > 0 {
        out.push(Token::new(chars[..lead].iter().collect(), start));
    }
    out.push(Token::new(
        chars[lead..core_end].iter().collect(),
        start + lead,
    ));
    if trail > 0 {
        out.push(Token::new(
            chars[core_end..].iter().collect(),
            start + core_end,
        ));
    }
}

/// Whitespace split, leading/trailing punctuation stripped, lowercased; empty
/// results are dropped. Used for lexicon matching and word counts.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|chunk| {
            let w = chunk.trim_matches(is_punct);
            (!w.is_empty()).then(|| w.to_lowercase())
        })
        .collect()
}

/// Normalizes a user handle: strips a leading '@' and lowercases.
pub fn normalize_user(handle: &str) -> String {
    handle.trim().trim_start_matches('@').to_lowercase()
}

/// Normalizes an entity surface form: lowercase, whitespace collapsed.
pub fn normalize_entity(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Extracts `@handle` mentions from raw text. The handle is the run of
/// alphanumerics and underscores after the '@'; results are normalized and
/// deduplicated in order of first appearance.
pub fn extract_mentions(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let Some(rest) = chunk
            .trim_start_matches(|c: char| is_punct(c) && c != '@')
            .strip_prefix('@')
        else {
            continue;
        };
        let handle: String = rest
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if handle.is_empty() {
            continue;
        }
        let handle = handle.to_lowercase();
        if seen.insert(handle.clone()) {
            out.push(handle);
        }
    }
    out
}

/// Character vocabulary. Index 0 is padding, 1 is unknown, and `chars[k]`
/// maps to `k + 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl TryFrom<Vec<char>> for CharVocab {
    type Error = Error;

    fn try_from(chars: Vec<char>) -> Result<Self> {
        CharVocab::new(chars)
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(vocab: CharVocab) -> Self {
        vocab.chars
    }
}

impl CharVocab {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let chars: Vec<char> = chars.into_iter().collect();
        let mut index = HashMap::with_capacity(chars.len());
        for (k, &c) in chars.iter().enumerate() {
            if index.insert(c, k + 2).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate character {c:?} in vocabulary"
                )));
            }
        }
        Ok(CharVocab { chars, index })
    }

    /// Collects every character seen at least `min_count` times, in code
    /// point order.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for text in texts {
            for c in text.chars() {
                *counts.entry(c).or_default() += 1;
            }
        }
        let chars = counts
            .into_iter()
            .filter(|&(_, n)| n >= min_count.max(1))
            .map(|(c, _)| c);
        // keys of a map are unique
        CharVocab::new(chars).expect("unique characters")
    }

    /// Number of indices including the two reserved ones.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        index
            .checked_sub(2)
            .and_then(|k| self.chars.get(k).copied())
    }

    /// Inverse of [`char_encode`] over the unpadded prefix. Reserved indices
    /// decode to nothing.
    pub fn decode(&self, seq: &CharSeq) -> String {
        seq.indices[..seq.length]
            .iter()
            .filter_map(|&i| self.char_at(i))
            .collect()
    }
}

/// A fixed-length encoded character sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSeq {
    pub indices: Vec<usize>,
    /// Number of encoded characters before padding.
    pub length: usize,
}

impl CharSeq {
    pub fn max_len(&self) -> usize {
        self.indices.len()
    }
}

pub fn char_encode(text: &str, vocab: &CharVocab, max_len: usize) -> Result<CharSeq> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let mut indices: Vec<usize> = text
        .chars()
        .take(max_len)
        .map(|c| vocab.index_of(c))
        .collect();
    let length = indices.len();
    indices.resize(max_len, PAD);
    Ok(CharSeq { indices, length })
}

/// Counts n-grams of the requested orders over lowercased tokens.
pub fn ngrams(tokens: &TokenSeq, n_values: &BTreeSet<usize>) -> Result<BTreeMap<String, usize>> {
    let lowers: Vec<&str> = tokens.lowers().collect();
    ngrams_of(&lowers, n_values)
}

pub(crate) fn ngrams_of(
    lowers: &[&str],
    n_values: &BTreeSet<usize>,
) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for &n in n_values {
        if n == 0 {
            return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
        }
        for window in lowers.windows(n) {
            *counts.entry(window.join(" ")).or_default() += 1;
        }
    }
    Ok(counts)
}

const NEGATION_CUES: &[&str] = &[
    "not", "no", "never", "don't", "dont", "doesn't", "doesnt", "didn't", "didnt", "won't", "wont",
    "can't", "cant", "ain't", "aint",
];

pub fn is_negation_cue(lower: &str) -> bool {
    let lower = lower.replace('\u{2019}', "'");
    NEGATION_CUES.contains(&lower.as_str()) || lower.ends_with("n't")
}

/// True iff some lexicon word has a negation cue among the `window` tokens
/// directly before it.
pub fn detect_negation(tokens: &TokenSeq, lexicon: &Lexicon, window: usize) -> Result<bool> {
    if window == 0 {
        return Err(Error::InvalidArgument(
            "negation window must be >= 1".into(),
        ));
    }
    let toks = &tokens.tokens;
    Ok(toks.iter().enumerate().any(|(j, tok)| {
        lexicon.contains(&tok.lower)
            && toks[j.saturating_sub(window)..j]
                .iter()
                .any(|t| is_negation_cue(&t.lower))
    }))
}

/// A recognized entity, keyed by its normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub entity: String,
    pub start: usize,
    pub end: usize,
}

fn is_capitalized(tok: &Token) -> bool {
    tok.surface.chars().next().is_some_and(char::is_uppercase)
}

/// Rule-based stand-in for a named entity recognizer.
///
/// Maximal runs of capitalized tokens become entities, except a lone
/// capitalized token at the start of the tweet. Mentions and hashtags are
/// entities on their own, with the sigil dropped.
pub fn entity_candidates(tokens: &TokenSeq) -> Vec<EntityMention> {
    let toks = &tokens.tokens;
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let tok = &toks[i];
        if tok.is_mention() || tok.is_hashtag() {
            let entity = normalize_entity(&tok.surface[1..]);
            if !entity.is_empty() {
                out.push(EntityMention {
                    entity,
                    start: i,
                    end: i + 1,
                });
            }
            i += 1;
            continue;
        }
        if !is_capitalized(tok) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < toks.len()
            && is_capitalized(&toks[j])
            && !toks[j].is_mention()
            && !toks[j].is_hashtag()
        {
            j += 1;
        }
        if !(i == 0 && j == 1) {
            let text = toks[i..j]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            out.push(EntityMention {
                entity: normalize_entity(&text),
                start: i,
                end: j,
            });
        }
        i = j;
    }
    out
}

/// Source of entity mentions for a tweet.
pub trait Recognizer: Sync {
    fn recognize(&self, tweet: &Tweet, tokens: &TokenSeq) -> Vec<EntityMention>;
}

/// The capitalization/sigil rules of [`entity_candidates`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleRecognizer;

impl Recognizer for RuleRecognizer {
    fn recognize(&self, _tweet: &Tweet, tokens: &TokenSeq) -> Vec<EntityMention> {
        entity_candidates(tokens)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationLine {
    tweet_id: String,
    entities: Vec<AnnotatedEntity>,
}

#[derive(Debug, Deserialize)]
struct AnnotatedEntity {
    text: String,
    start_token: usize,
    end_token: usize,
}

/// Entities produced by an external tagger. Tweets absent from the
/// annotation file fall back to the rule-based recognizer.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedRecognizer {
    by_tweet: HashMap<String, Vec<EntityMention>>,
}

impl AnnotatedRecognizer {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut by_tweet = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationLine = serde_json::from_str(&line).map_err(|e| Error::Record {
                line: n + 1,
                message: e.to_string(),
            })?;
            let mut mentions = Vec::with_capacity(rec.entities.len());
            for e in rec.entities {
                let entity = normalize_entity(&e.text);
                if e.end_token <= e.start_token || entity.is_empty() {
                    return Err(Error::Record {
                        line: n + 1,
                        message: format!("bad entity span [{}, {})", e.start_token, e.end_token),
                    });
                }
                mentions.push(EntityMention {
                    entity,
                    start: e.start_token,
                    end: e.end_token,
                });
            }
            by_tweet.insert(rec.tweet_id, mentions);
        }
        Ok(AnnotatedRecognizer { by_tweet })
    }

    pub fn insert(&mut self, tweet_id: impl Into<String>, mentions: Vec<EntityMention>) {
        self.by_tweet.insert(tweet_id.into(), mentions);
    }
}

impl Recognizer for AnnotatedRecognizer {
    fn recognize(&self, tweet: &Tweet, tokens: &TokenSeq) -> Vec<EntityMention> {
        match self.by_tweet.get(&tweet.id) {
            Some(mentions) => mentions
                .iter()
                .filter(|m| m.end <= tokens.len())
                .cloned()
                .collect(),
            None => entity_candidates(tokens),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(words: &[(&str, u8)]) -> Lexicon {
        Lexicon::from_entries(words.iter().map(|(w, s)| (w.to_string(), *s))).unwrap()
    }

    #[test]
    fn tokenize_splits_trailing_punctuation() {
        assert_eq!(
            tokenize("@user1 you LOSER!!").surfaces(),
            ["@user1", "you", "LOSER", "!!"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't die.").surfaces(), ["don't", "die", "."]);
    }

    #[test]
    fn tokenize_spans_are_code_points() {
        let toks = tokenize("☃ (hi)");
        assert_eq!(toks.surfaces(), ["☃", "(", "hi", ")"]);
        let spans: Vec<_> = toks.tokens.iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(spans, [(0, 1), (2, 3), (3, 5), (5, 6)]);
    }

    #[test]
    fn word_tokens_strip_and_lowercase() {
        assert_eq!(word_tokens("You IDIOT!! ..."), ["you", "idiot"]);
        assert_eq!(word_tokens("@bob, hi"), ["bob", "hi"]);
    }

    #[test]
    fn mentions_are_extracted_and_normalized() {
        assert_eq!(extract_mentions("@a hi"), ["a"]);
        assert_eq!(extract_mentions("(@Bob: hey @bob @c_d!"), ["bob", "c_d"]);
        assert!(extract_mentions("mail me @ home").is_empty());
    }

    #[test]
    fn char_encode_pads_truncates_and_marks_unknown() {
        let vocab = CharVocab::new(['a', 'b', 'c', 'd', 'e', 'f']).unwrap();
        assert_eq!(vocab.index_of('a'), 2);
        assert_eq!(vocab.index_of('b'), 3);

        let s = char_encode("ab", &vocab, 4).unwrap();
        assert_eq!(s.indices, [2, 3, 0, 0]);
        assert_eq!(s.length, 2);

        let s = char_encode("abcdef", &vocab, 4).unwrap();
        assert_eq!(s.indices, [2, 3, 4, 5]);
        assert_eq!(s.length, 4);

        let s = char_encode("a☃", &vocab, 4).unwrap();
        assert_eq!(&s.indices[..2], &[2, UNK]);

        assert!(char_encode("a", &vocab, 0).is_err());
    }

    #[test]
    fn vocab_rejects_duplicates() {
        assert!(CharVocab::new(['a', 'a']).is_err());
    }

    #[test]
    fn ngram_counts() {
        let toks = tokenize("a b a");
        let uni = ngrams(&toks, &BTreeSet::from([1])).unwrap();
        assert_eq!(uni, BTreeMap::from([("a".into(), 2), ("b".into(), 1)]));
        let bi = ngrams(&toks, &BTreeSet::from([2])).unwrap();
        assert_eq!(bi, BTreeMap::from([("a b".into(), 1), ("b a".into(), 1)]));
        assert!(ngrams(&tokenize("a"), &BTreeSet::from([3]))
            .unwrap()
            .is_empty());
        assert!(ngrams(&toks, &BTreeSet::from([0])).is_err());
    }

    #[test]
    fn negation_examples() {
        let die = lex(&[("die", 1)]);
        assert!(detect_negation(&tokenize("Please don't die."), &die, 3).unwrap());
        assert!(!detect_negation(&tokenize("die already"), &die, 3).unwrap());
        assert!(!detect_negation(&tokenize("not a very bad big die"), &die, 3).unwrap());
        assert!(detect_negation(&tokenize("not a very bad big die"), &die, 5).unwrap());
        assert!(detect_negation(&tokenize("you shouldn't die"), &die, 1).unwrap());
        assert!(detect_negation(&tokenize("don\u{2019}t die"), &die, 1).unwrap());
        assert!(detect_negation(&tokenize("die"), &die, 0).is_err());
    }

    #[test]
    fn entity_rules() {
        let ents = entity_candidates(&tokenize("I love Donald Trump"));
        assert_eq!(ents.len(), 1);
        assert_eq!(ents[0].entity, "donald trump");
        assert_eq!((ents[0].start, ents[0].end), (2, 4));

        let ents = entity_candidates(&tokenize("@FoxNews lies"));
        assert_eq!(ents[0].entity, "foxnews");
        assert!(entity_candidates(&tokenize("the")).is_empty());

        // a multi-token run at the start is kept
        let ents = entity_candidates(&tokenize("Old Alabama rocks"));
        assert_eq!(ents[0].entity, "old alabama");

        let ents = entity_candidates(&tokenize("go #Brexit now Obama"));
        let names: Vec<_> = ents.iter().map(|e| e.entity.as_str()).collect();
        assert_eq!(names, ["brexit", "obama"]);
    }

    #[test]
    fn annotated_recognizer_overrides_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ents.jsonl");
        std::fs::write(
            &path,
            r#"{"tweet_id":"1","entities":[{"text":"US  Economy","start_token":0,"end_token":2}]}"#,
        )
        .unwrap();
        let rec = AnnotatedRecognizer::load(&path).unwrap();
        let t1 = Tweet::new("1", "u", "us economy booms", "2017-08-01T00:00:00Z").unwrap();
        let got = rec.recognize(&t1, &tokenize(&t1.text));
        assert_eq!(got[0].entity, "us economy");
        let t2 = Tweet::new("2", "u", "I like Obama", "2017-08-01T00:00:00Z").unwrap();
        assert_eq!(rec.recognize(&t2, &tokenize(&t2.text))[0].entity, "obama");
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(s in "[a-f ]{0,40}", max_len in 1usize..50) {
            let vocab = CharVocab::new(['a', 'b', 'c', 'd', 'e', 'f', ' ']).unwrap();
            let seq = char_encode(&s, &vocab, max_len).unwrap();
            prop_assert!(seq.length <= max_len);
            prop_assert_eq!(seq.indices.len(), max_len);
            let expected: String = s.chars().take(max_len).collect();
            prop_assert_eq!(vocab.decode(&seq), expected);
        }

        #[test]
        fn ngram_totals(words in proptest::collection::vec("[a-c]{1,2}", 0..12), n in 1usize..4) {
            let toks = TokenSeq::from_surfaces(&words);
            let counts = ngrams(&toks, &BTreeSet::from([n])).unwrap();
            let total: usize = counts.values().sum();
            prop_assert_eq!(total, words.len().saturating_sub(n - 1));
        }

        #[test]
        fn negation_monotone_in_window(words in proptest::collection::vec(prop_oneof!["not", "die", "x", "y", "never"], 0..12), w in 1usize..6) {
            let die = lex(&[("die", 1)]);
            let toks = TokenSeq::from_surfaces(&words);
            if detect_negation(&toks, &die, w).unwrap() {
                prop_assert!(detect_negation(&toks, &die, w + 1).unwrap());
            }
        }

        #[test]
        fn entity_spans_disjoint(text in "(([A-Z][a-z]{0,3}|[a-z]{1,3}|@[a-z]{1,3}|#[A-Z]{1,3}|[.!]) ){0,8}") {
            let toks = tokenize(&text);
            let ents = entity_candidates(&toks);
            for pair in ents.windows(2) {
                prop_assert!(pair[0].end <= pair[1].start);
            }
            for e in &ents {
                prop_assert!(e.end > e.start && !e.entity.is_empty());
            }
        }

        #[test]
        fn token_spans_increase(text in "\\PC{0,40}") {
            let toks = tokenize(&text);
            for t in &toks.tokens {
                prop_assert!(t.end > t.start);
                prop_assert_eq!(&t.lower, &t.surface.to_lowercase());
            }
            for pair in toks.tokens.windows(2) {
                prop_assert!(pair[0].end <= pair[1].start);
            }
        }
    }
}
