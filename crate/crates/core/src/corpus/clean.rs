//! First-reply pair extraction and stop-word filtering.

use super::types::{AuthorRole, Corpus, PairExample};
use crate::text::Tokenizer;

/// Drops any text containing one of its entries. Entries are tokenised with
/// the same tokenizer as the text and matched as contiguous token runs.
#[derive(Clone, Debug, Default)]
pub struct ContentFilter {
    tokenizer: Tokenizer,
    advertisement: Vec<Vec<String>>,
    offensive: Vec<Vec<String>>,
}

impl ContentFilter {
    pub fn new(tokenizer: Tokenizer) -> Self {
        Self { tokenizer, ..Default::default() }
    }

    pub fn with_advertisement_words<S: AsRef<str>>(mut self, words: &[S]) -> Self {
        self.advertisement = self.compile(words);
        self
    }

    pub fn with_offensive_words<S: AsRef<str>>(mut self, words: &[S]) -> Self {
        self.offensive = self.compile(words);
        self
    }

    fn compile<S: AsRef<str>>(&self, words: &[S]) -> Vec<Vec<String>> {
        words.iter().map(|w| self.tokenizer.tokenize(w.as_ref())).filter(|t| !t.is_empty()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.advertisement.is_empty() && self.offensive.is_empty()
    }

    pub fn blocks(&self, text: &str) -> bool {
        if self.is_empty() {
            return false;
        }
        let tokens = self.tokenizer.tokenize(text);
        self.advertisement.iter().chain(&self.offensive).any(|needle| contains_run(&tokens, needle))
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// One (post, earliest human reply) pair per post that has a human reply.
/// Ties on the reply timestamp go to the reply listed first.
pub fn first_reply_pairs(corpus: &Corpus) -> Vec<PairExample> {
    corpus
        .posts()
        .iter()
        .filter_map(|p| {
            corpus
                .thread(&p.id)
                .find(|r| r.author_role == AuthorRole::Human)
                .map(|r| PairExample { post_text: p.text.clone(), response_text: r.text.clone() })
        })
        .filter(|pair| !pair.response_text.trim().is_empty())
        .collect()
}

pub fn filter_pairs(pairs: Vec<PairExample>, filter: &ContentFilter) -> Vec<PairExample> {
    pairs.into_iter().filter(|p| !filter.blocks(&p.post_text) && !filter.blocks(&p.response_text)).collect()
}

pub fn clean_pairs(corpus: &Corpus, filter: &ContentFilter) -> Vec<PairExample> {
    filter_pairs(first_reply_pairs(corpus), filter)
}
