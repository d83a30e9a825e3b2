//! Word banks for simulated post and reply text.

use crate::corpus::PostLabel;
use rand::seq::IndexedRandom;
use rand::Rng;

const COMMON: &[&str] = &[
    "baby", "my", "the", "today", "week", "weeks", "little", "one", "we", "and", "is", "so", "at", "night", "morning", "husband", "mom",
    "home", "again", "just", "this", "very",
];

const INFORMATIONAL: &[&str] = &[
    "how",
    "why",
    "what",
    "should",
    "can",
    "normal",
    "doctor",
    "hospital",
    "fever",
    "dose",
    "vitamin",
    "formula",
    "rash",
    "test",
    "scan",
    "result",
    "milk",
    "powder",
    "advice",
    "anyone",
    "know",
    "recommend",
    "?",
];

const EMOTIONAL: &[&str] = &[
    "tired",
    "scared",
    "worried",
    "sad",
    "alone",
    "crying",
    "cannot",
    "sleep",
    "anxious",
    "upset",
    "hurt",
    "exhausted",
    "afraid",
    "stress",
    "lonely",
    "hard",
    "tears",
    "nervous",
    "feel",
];

const DAILY: &[&str] = &[
    "walk", "park", "smile", "first", "tooth", "bath", "lunch", "shopping", "shoes", "photo", "laugh", "weather", "nap", "played", "cute",
    "cooked", "sunny", "visited", "grandma",
];

const REPLY: &[&str] = &[
    "hugs",
    "you",
    "are",
    "doing",
    "great",
    "hang",
    "in",
    "there",
    "take",
    "care",
    "rest",
    "well",
    "it",
    "gets",
    "better",
    "stay",
    "strong",
    "so",
    "cute",
    "congratulations",
    "best",
    "wishes",
    "same",
    "here",
    "me",
    "too",
    "hope",
    "everything",
    "goes",
    "fine",
    "!",
];

const POSTER_REPLY: &[&str] = &[
    "thank", "you", "thanks", "so", "much", "yes", "ok", "i", "will", "try", "that", "good", "haha", "still", "hard", "feel", "better",
    "now", "hope", "so",
];

/// Vocabulary that marks a simulated post as informational.
pub(super) fn informational_words() -> &'static [&'static str] {
    INFORMATIONAL
}

fn draw<R: Rng + ?Sized>(rng: &mut R, banks: &[(&[&str], f64)], len: usize) -> String {
    let total: f64 = banks.iter().map(|b| b.1).sum();
    (0..len)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut bank = banks[banks.len() - 1].0;
            for (b, w) in banks {
                if u < *w {
                    bank = b;
                    break;
                }
                u -= w;
            }
            *bank.choose(rng).expect("bank non-empty")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Post text of at least six tokens, dominated by the category's bank.
pub(super) fn post_text<R: Rng + ?Sized>(rng: &mut R, label: PostLabel) -> String {
    let topical = match label {
        PostLabel::Informational => INFORMATIONAL,
        PostLabel::EmotionalSupport => EMOTIONAL,
        PostLabel::SharingDailyLife => DAILY,
    };
    let len = rng.random_range(6..18);
    draw(rng, &[(topical, 0.6), (COMMON, 0.4)], len)
}

pub(super) fn reply_text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let len = rng.random_range(3..10);
    draw(rng, &[(REPLY, 1.0)], len)
}

pub(super) fn poster_text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let len = rng.random_range(2..8);
    draw(rng, &[(POSTER_REPLY, 1.0)], len)
}
