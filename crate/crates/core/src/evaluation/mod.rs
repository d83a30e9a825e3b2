//! Measurement math: text similarity, rater agreement, hypothesis tests,
//! corpus descriptives and the per-arm experiment metrics.

mod agreement;
mod bleu;
mod descriptives;
mod metrics;
pub mod valence;

pub use agreement::{cohen_kappa, icc_3_1, Dimension, RatingMatrix};
pub use bleu::{bleu, corpus_bleu, Smoothing};
pub use descriptives::{interval_descriptives, median, IntervalDescriptives};
pub use metrics::{
    compute_metrics, ArmMetrics, ArmTests, ChangeFractions, GapStat, MeanSd, MetricsConfig, MetricsReport, Timing, ValenceDistribution,
    ValenceMetrics,
};
pub use tests::{chi2_2x2, t_from_summary, t_test_ind, Summary, TVariant, TestResult};
pub use valence::{valence_change, ValenceChange, ValenceLabel};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("reference list is empty")]
    EmptyReferences,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no observations")]
    Empty,
    #[error("too few observations")]
    TooFewObservations,
    #[error("rows have different lengths")]
    Ragged,
    #[error("value out of range")]
    OutOfRange,
    #[error("a table margin is zero")]
    ZeroMargin,
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),
    #[error("event log has unclosed experiment windows: {0:?}")]
    IncompleteLog(Vec<String>),
}
