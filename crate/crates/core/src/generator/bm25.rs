//! Okapi BM25 retrieval over stored posts, returning the reply attached to
//! the best-matching post.

use super::GeneratorError;
use crate::corpus::PairExample;
use crate::text::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    tokenizer: Tokenizer,
    docs: Vec<HashMap<String, usize>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    df: HashMap<String, usize>,
    responses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieved {
    pub doc: usize,
    pub response: String,
    pub score: f64,
    /// No query token occurs in any document; document 0 was returned.
    pub zero_score: bool,
}

pub fn build_bm25_index(pairs: &[PairExample], tokenizer: Tokenizer, k1: f64, b: f64) -> Result<Bm25Index, GeneratorError> {
    if pairs.is_empty() {
        return Err(GeneratorError::EmptyPairs);
    }
    let mut docs = Vec::with_capacity(pairs.len());
    let mut doc_len = Vec::with_capacity(pairs.len());
    let mut df: HashMap<String, usize> = HashMap::new();
    for p in pairs {
        let tokens = tokenizer.tokenize(&p.post_text);
        let mut tf: HashMap<String, usize> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for t in tf.keys() {
            *df.entry(t.clone()).or_default() += 1;
        }
        doc_len.push(tokens.len());
        docs.push(tf);
    }
    let avg_len = doc_len.iter().sum::<usize>() as f64 / pairs.len() as f64;
    Ok(Bm25Index { k1, b, tokenizer, docs, doc_len, avg_len, df, responses: pairs.iter().map(|p| p.response_text.clone()).collect() })
}

impl Bm25Index {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df(token) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of every document; each distinct query token counts once per
    /// occurrence in the query.
    pub fn scores(&self, query: &[String]) -> Vec<f64> {
        let idf: Vec<(&String, f64)> = query.iter().map(|t| (t, self.idf(t))).collect();
        self.docs
            .iter()
            .zip(&self.doc_len)
            .map(|(tf, &len)| {
                // an all-empty corpus has avg_len 0; its tf terms are all zero
                let norm = if self.avg_len > 0.0 { len as f64 / self.avg_len } else { 0.0 };
                idf.iter()
                    .map(|(t, idf)| {
                        let f = tf.get(*t).copied().unwrap_or(0) as f64;
                        idf * f * (self.k1 + 1.0) / (f + self.k1 * (1.0 - self.b + self.b * norm))
                    })
                    .sum()
            })
            .collect()
    }

    pub fn retrieve(&self, post_text: &str) -> Result<Retrieved, GeneratorError> {
        let query = self.tokenizer.tokenize(post_text);
        if query.is_empty() {
            return Err(GeneratorError::QueryEmpty);
        }
        let shared = {
            let q: HashSet<&String> = query.iter().collect();
            q.iter().any(|t| self.df.contains_key(*t))
        };
        let scores = self.scores(&query);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(Retrieved { doc: best, response: self.responses[best].clone(), score: scores[best], zero_score: !shared })
    }
}

pub fn retrieve_response(index: &Bm25Index, post_text: &str) -> Result<String, GeneratorError> {
    index.retrieve(post_text).map(|r| r.response)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(docs: &[&str]) -> Vec<PairExample> {
        docs.iter().enumerate().map(|(i, d)| PairExample { post_text: d.to_string(), response_text: format!("reply {i}") }).collect()
    }

    fn index(docs: &[&str]) -> Bm25Index {
        build_bm25_index(&pairs(docs), Tokenizer::default(), DEFAULT_K1, DEFAULT_B).unwrap()
    }

    #[test]
    fn counting() {
        let one = index(&["baby sleep well"]);
        assert_eq!((one.len(), one.avg_len()), (1, 3.0));
        let three = index(&["baby sleep", "baby cry cry", "doctor visit"]);
        assert_eq!(three.df("baby"), 2);
        assert_eq!(three.df("cry"), 1);
        assert!(matches!(build_bm25_index(&[], Tokenizer::default(), 1.2, 0.75), Err(GeneratorError::EmptyPairs)));
    }

    #[test]
    fn tie_and_no_overlap() {
        let idx = index(&["a b", "a b", "c d"]);
        let r = idx.retrieve("a b").unwrap();
        assert_eq!((r.doc, r.zero_score), (0, false));
        let r = idx.retrieve("zzz").unwrap();
        assert_eq!((r.doc, r.score, r.zero_score), (0, 0.0, true));
        assert!(matches!(idx.retrieve("   "), Err(GeneratorError::QueryEmpty)));
    }
}
