//! Seeded synthetic corpora with known ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Label;
use crate::tdsa::{EntitySentimentProfile, SentimentCounts, SentimentLabel, TdExample};
use crate::text::TokenSeq;

/// Token whose presence marks a planted tweet.
pub const PLANTED_TOKEN: &str = "zqx";

const FILLER: [&str; 40] = [
    "the", "a", "is", "was", "on", "in", "at", "to", "for", "with", "and", "but", "we", "you",
    "they", "it", "today", "game", "news", "vote", "city", "team", "show", "time", "day", "night",
    "road", "school", "music", "rain", "food", "movie", "party", "work", "home", "late", "early",
    "big", "small", "new",
];

/// Short filler text of 3 to 7 words, at most `max_chars` characters.
fn filler(rng: &mut ChaCha8Rng, max_chars: usize) -> Vec<&'static str> {
    let n = rng.gen_range(3..=7);
    let mut words: Vec<&str> = Vec::with_capacity(n);
    let mut len = 0;
    for _ in 0..n {
        let w = FILLER[rng.gen_range(0..FILLER.len())];
        if len + w.len() + 1 > max_chars {
            break;
        }
        len += w.len() + 1;
        words.push(w);
    }
    words
}

fn with_plant(rng: &mut ChaCha8Rng, planted: bool) -> String {
    // leave room for the planted token within 48 characters
    let mut words = filler(rng, 44);
    if planted {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, PLANTED_TOKEN);
    }
    words.join(" ")
}

/// `n` tweets, half of them (exactly, after shuffling) containing
/// [`PLANTED_TOKEN`]; the label is incivil iff the token is present.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<(String, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flags: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    flags.shuffle(&mut rng);
    flags
        .into_iter()
        .map(|p| {
            let label = if p { Label::Incivil } else { Label::Civil };
            (with_plant(&mut rng, p), label)
        })
        .collect()
}

/// One tweet of the conflict-gated task.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedTweet {
    pub text: String,
    pub planted: bool,
    pub conflict: u64,
    pub label: Label,
}

/// Tweets where the token is planted with probability 1/2 and, independently,
/// the conflict count is zero with probability 1/2 and otherwise uniform on
/// 1..=3. The label is incivil iff planted and conflict >= 1.
pub fn gated_corpus(n: usize, seed: u64) -> Vec<GatedTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let planted = rng.gen_bool(0.5);
            let conflict = if rng.gen_bool(0.5) {
                0
            } else {
                rng.gen_range(1..=3)
            };
            let label = if planted && conflict >= 1 {
                Label::Incivil
            } else {
                Label::Civil
            };
            GatedTweet {
                text: with_plant(&mut rng, planted),
                planted,
                conflict,
                label,
            }
        })
        .collect()
}

pub const ENTITIES: [&str; 8] = [
    "obama", "trump", "nasa", "brexit", "google", "paris", "fifa", "tesla",
];
pub const POSITIVE_CUES: [&str; 4] = ["great", "brilliant", "wonderful", "good"];
pub const NEGATIVE_CUES: [&str; 4] = ["terrible", "awful", "horrible", "bad"];

fn td(words: Vec<&str>, at: usize, label: SentimentLabel) -> TdExample {
    TdExample::new(TokenSeq::from_surfaces(&words), at, at + 1, Some(label))
        .expect("span inside sentence")
}

/// Two-entity sentences carrying opposite sentiment toward each entity,
/// plus a minority of neutral sentences. Every sentence yields one example
/// per entity.
pub fn two_entity_examples(sentences: usize, seed: u64) -> Vec<TdExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * sentences);
    for _ in 0..sentences {
        let mut pair = ENTITIES.choose_multiple(&mut rng, 2);
        let (e1, e2) = (*pair.next().expect("two"), *pair.next().expect("two"));
        if rng.gen_bool(0.2) {
            let (words, i, j) = match rng.gen_range(0..2) {
                0 => (vec![e1, "met", e2, "today"], 0, 2),
                _ => (vec!["news", "about", e1, "and", e2], 2, 4),
            };
            out.push(td(words.clone(), i, SentimentLabel::Neutral));
            out.push(td(words, j, SentimentLabel::Neutral));
            continue;
        }
        let first_pos = rng.gen_bool(0.5);
        let p = *POSITIVE_CUES.choose(&mut rng).expect("cues");
        let n = *NEGATIVE_CUES.choose(&mut rng).expect("cues");
        let (c1, c2) = if first_pos { (p, n) } else { (n, p) };
        let (words, i, j) = match rng.gen_range(0..3) {
            0 => (vec![e1, "is", c1, "but", e2, "is", c2], 0, 4),
            1 => (
                vec!["i", "think", e1, "was", c1, "and", e2, "was", c2],
                2,
                6,
            ),
            _ => (vec![e1, "looks", c1, "while", e2, "looks", c2], 0, 4),
        };
        let (l1, l2) = if first_pos {
            (SentimentLabel::Positive, SentimentLabel::Negative)
        } else {
            (SentimentLabel::Negative, SentimentLabel::Positive)
        };
        out.push(td(words.clone(), i, l1));
        out.push(td(words, j, l2));
    }
    out
}

/// "X is great" / "X is terrible" single-entity sentences, with a neutral
/// "X is here" third class.
pub fn polarity_examples(n: usize, seed: u64) -> Vec<TdExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e = *ENTITIES.choose(&mut rng).expect("entities");
            let (cue, label) = match rng.gen_range(0..5) {
                0 | 1 => ("great", SentimentLabel::Positive),
                2 | 3 => ("terrible", SentimentLabel::Negative),
                _ => ("here", SentimentLabel::Neutral),
            };
            td(vec![e, "is", cue], 0, label)
        })
        .collect()
}

/// Vocabulary of the two synthetic sentiment tasks.
pub fn sentiment_vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = ENTITIES.to_vec();
    v.extend(POSITIVE_CUES);
    v.extend(NEGATIVE_CUES);
    v.extend([
        "is", "but", "i", "think", "was", "and", "looks", "while", "met", "today", "news", "about",
        "great", "terrible", "here",
    ]);
    v.sort_unstable();
    v.dedup();
    v
}

/// A profile over entities `e0..e{universe}` with at most `max_entities`
/// entries and counts in `0..=max_count`.
pub fn random_profile(
    user: &str,
    rng: &mut impl Rng,
    universe: usize,
    max_entities: usize,
    max_count: u64,
) -> EntitySentimentProfile {
    let mut p = EntitySentimentProfile::new(user);
    for _ in 0..rng.gen_range(0..=max_entities) {
        let e = format!("e{}", rng.gen_range(0..universe));
        p.insert(
            &e,
            SentimentCounts::new(
                rng.gen_range(0..=max_count),
                rng.gen_range(0..=max_count),
                rng.gen_range(0..=max_count),
            ),
        );
    }
    p
}
