//! Fixtures shared by the benchmarks.

use incivility::classifier::{CharExample, CharModelConfig};
use incivility::synth;
use incivility::tdsa::EntitySentimentProfile;
use incivility::text::{tokenize, CharVocab, TokenSeq};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Encoded planted-token tweets and the vocabulary they were encoded with.
pub fn char_batch(n: usize, seed: u64) -> (CharVocab, Vec<CharExample>) {
    let corpus = synth::gated_corpus(n, seed);
    let vocab = CharVocab::fit(corpus.iter().map(|g| g.text.as_str()), 1);
    let max_len = CharModelConfig::default().max_len;
    let xs = corpus
        .iter()
        .map(|g| {
            CharExample::encode(&g.text, &vocab, max_len, g.conflict, Some(g.label))
                .expect("encodable")
        })
        .collect();
    (vocab, xs)
}

/// Random account-holder and target profile pairs.
pub fn profile_pairs(
    n: usize,
    universe: usize,
    seed: u64,
) -> Vec<(EntitySentimentProfile, EntitySentimentProfile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                synth::random_profile("a", &mut rng, universe, universe, 5),
                synth::random_profile("t", &mut rng, universe, universe, 5),
            )
        })
        .collect()
}

/// Tokenized synthetic tweets with binary labels.
pub fn token_docs(n: usize, seed: u64) -> (Vec<TokenSeq>, Vec<bool>) {
    synth::planted_corpus(n, seed)
        .iter()
        .map(|(t, l)| (tokenize(t), l.is_incivil()))
        .unzip()
}
