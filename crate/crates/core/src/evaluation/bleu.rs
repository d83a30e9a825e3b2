//! Sentence and corpus BLEU over token lists.

use super::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Adds `k` to the matched and total counts of every order n >= 2.
    AddK(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Self::AddK(1.0)
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Matched and total n-gram counts for orders 1..=max_n, with matches
/// clipped by the maximum count in any single reference.
fn clipped_counts<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], references: &[Vec<R>], max_n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut matched = vec![0; max_n];
    let mut total = vec![0; max_n];
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        for (g, c) in &cand {
            matched[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0));
            total[n - 1] += c;
        }
    }
    (matched, total)
}

/// Reference length closest to `c`; the shorter one wins ties.
fn closest_ref_len<R>(c: usize, references: &[Vec<R>]) -> usize {
    references.iter().map(Vec::len).min_by_key(|&r| (r.abs_diff(c), r)).unwrap_or(0)
}

fn combine(matched: &[usize], total: &[usize], c: usize, r: usize, smoothing: Smoothing) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (i, (&m, &t)) in matched.iter().zip(total).enumerate() {
        let (m, t) = match smoothing {
            Smoothing::AddK(k) if i > 0 => (m as f64 + k, t as f64 + k),
            _ => (m as f64, t as f64),
        };
        if m == 0.0 || t == 0.0 {
            return 0.0;
        }
        log_sum += (m / t).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * (log_sum / matched.len() as f64).exp()).clamp(0.0, 1.0)
}

pub fn bleu<S: AsRef<str>, R: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<R>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<f64, EvalError> {
    if max_n == 0 {
        return Err(EvalError::InvalidOrder);
    }
    if references.is_empty() {
        return Err(EvalError::EmptyReferences);
    }
    let (matched, total) = clipped_counts(candidate, references, max_n);
    let c = candidate.len();
    Ok(combine(&matched, &total, c, closest_ref_len(c, references), smoothing))
}

/// Corpus BLEU: clipped counts and lengths are summed over all segments
/// before the precisions are combined.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<Vec<R>>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<f64, EvalError> {
    if max_n == 0 {
        return Err(EvalError::InvalidOrder);
    }
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch { left: candidates.len(), right: references.len() });
    }
    if references.is_empty() || references.iter().any(Vec::is_empty) {
        return Err(EvalError::EmptyReferences);
    }
    let mut matched = vec![0; max_n];
    let mut total = vec![0; max_n];
    let (mut c, mut r) = (0, 0);
    for (cand, refs) in candidates.iter().zip(references) {
        let (m, t) = clipped_counts(cand, refs, max_n);
        for n in 0..max_n {
            matched[n] += m[n];
            total[n] += t[n];
        }
        c += cand.len();
        r += closest_ref_len(cand.len(), refs);
    }
    Ok(combine(&matched, &total, c, r, smoothing))
}
