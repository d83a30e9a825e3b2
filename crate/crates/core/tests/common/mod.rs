#![allow(dead_code)]

pub mod checks;
pub mod oracles;
pub mod script;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supportbot_core::corpus::{LabeledExample, TopCategory};

const FILLER: &[&str] = &[
    "baby", "sleep", "night", "milk", "today", "feel", "tired", "happy", "mom", "day", "week", "doctor", "little", "one", "so", "my", "is",
    "the", "and", "a", "we", "walk", "park", "smile", "first", "tooth", "crying", "morning", "husband", "home", "bath", "food", "fever",
    "nap", "hungry", "laugh", "weight", "hospital", "shoes", "rain",
];

/// Linearly separable toy corpus: a post is informational exactly when it
/// contains the token "why". Classes alternate, so the corpus is balanced.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(8..20);
            let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            let label = if i % 2 == 0 {
                let at = rng.random_range(0..=words.len());
                words.insert(at, "why");
                TopCategory::Informational
            } else {
                TopCategory::NonInformational
            };
            LabeledExample { post_text: words.join(" "), label }
        })
        .collect()
}

/// Same texts with labels drawn uniformly at random.
pub fn shuffled_labels(examples: &[LabeledExample], seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<TopCategory> = examples.iter().map(|e| e.label).collect();
    labels.shuffle(&mut rng);
    examples.iter().zip(labels).map(|(e, label)| LabeledExample { post_text: e.post_text.clone(), label }).collect()
}

const REPLY_WORDS: &[&str] = &[
    "hugs", "you", "are", "doing", "great", "hang", "in", "there", "mama", "so", "cute", "rest", "well", "take", "care", "it", "gets",
    "better", "stay", "strong", "we", "with", "love", "this",
];

/// Distinct post/reply pairs for memorisation checks.
pub fn toy_pairs(n: usize, seed: u64) -> Vec<supportbot_core::corpus::PairExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let post: Vec<&str> = (0..rng.random_range(6..10)).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
        let post = post.join(" ");
        if !seen.insert(post.clone()) {
            continue;
        }
        let reply: Vec<&str> = (0..rng.random_range(4..9)).map(|_| *REPLY_WORDS.choose(&mut rng).unwrap()).collect();
        out.push(supportbot_core::corpus::PairExample { post_text: post, response_text: reply.join(" ") });
    }
    out
}
