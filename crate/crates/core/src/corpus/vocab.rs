//! Frequency-ranked vocabulary and fixed-length sequence encoding.

use super::CorpusError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id mapping. Ids are dense; the four reserved tokens take ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Ranks tokens by descending frequency, ties broken lexicographically,
    /// and keeps at most `max_size` entries including the reserved ones.
    pub fn build<I, T, S>(texts: I, max_size: usize) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size <= RESERVED.len() {
            return Err(CorpusError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut n_texts = 0usize;
        for text in texts {
            n_texts += 1;
            for tok in text {
                let tok = tok.as_ref();
                if RESERVED.contains(&tok) {
                    continue;
                }
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        if n_texts == 0 {
            return Err(CorpusError::EmptyTexts);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED.iter().map(|s| s.to_string()).chain(ranked.into_iter().map(|(t, _)| t)).take(max_size).collect::<Vec<_>>();
        Ok(Self::from(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps tokens to ids (unknown to UNK), truncating or right-padding with
    /// PAD to exactly `seq_len` entries.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], seq_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().take(seq_len).map(|t| self.id_or_unk(t.as_ref())).collect();
        ids.resize(seq_len, PAD);
        ids
    }

    /// Ids without truncation or padding.
    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Inverse of [`encode`](Self::encode) up to the first PAD.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().take_while(|&&i| i != PAD).map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string()).collect()
    }
}
