//! Inter-rater agreement: Cohen's kappa and ICC(3,1).

use super::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::Hash;

pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = ma.iter().map(|(k, &c)| c as f64 * mb.get(k).copied().unwrap_or(0) as f64).sum::<f64>() / (n * n);
    if p_e == 1.0 {
        // a single shared category on both sides
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Grammar,
    Relevance,
    WillingToReply,
    EmotionalSupport,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Self::Grammar, Self::Relevance, Self::WillingToReply, Self::EmotionalSupport];
}

/// Raters x targets Likert scores in [-2, 2].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub dimension: Dimension,
    scores: Vec<Vec<f64>>,
}

impl RatingMatrix {
    pub fn new(dimension: Dimension, scores: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let targets = scores.first().map_or(0, Vec::len);
        if scores.len() < 2 || targets < 2 {
            return Err(EvalError::TooFewObservations);
        }
        if scores.iter().any(|r| r.len() != targets) {
            return Err(EvalError::Ragged);
        }
        if scores.iter().flatten().any(|s| !(-2.0..=2.0).contains(s)) {
            return Err(EvalError::OutOfRange);
        }
        Ok(Self { dimension, scores })
    }

    pub fn raters(&self) -> usize {
        self.scores.len()
    }

    pub fn targets(&self) -> usize {
        self.scores[0].len()
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }
}

/// Two-way mixed, consistency, single-rater ICC.
pub fn icc_3_1(m: &RatingMatrix) -> Result<f64, EvalError> {
    let (k, n) = (m.raters(), m.targets());
    let (kf, nf) = (k as f64, n as f64);
    let grand = m.scores.iter().flatten().sum::<f64>() / (kf * nf);
    let target_means: Vec<f64> = (0..n).map(|j| m.scores.iter().map(|r| r[j]).sum::<f64>() / kf).collect();
    let rater_means: Vec<f64> = m.scores.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
    let ss_total: f64 = m.scores.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    let ss_targets = kf * target_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let ss_raters = nf * rater_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let ss_error = (ss_total - ss_targets - ss_raters).max(0.0);
    let bms = ss_targets / (nf - 1.0);
    let ems = ss_error / ((nf - 1.0) * (kf - 1.0));
    let denom = bms + (kf - 1.0) * ems;
    if bms <= 0.0 || denom <= 0.0 {
        return Err(EvalError::Undefined("zero between-target variance"));
    }
    Ok((bms - ems) / denom)
}
