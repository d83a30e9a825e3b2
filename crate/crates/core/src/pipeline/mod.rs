//! Control logic: watch the community for overlooked posts, classify them,
//! randomize them into arms, draft replies for the experiment arm, gate the
//! drafts through human review, publish, and track every enrolled thread for
//! a fixed window. Every state change is an event in an append-only log.

mod engine;
mod log;
mod run;

pub use engine::{Pipeline, PipelineState, TickReport};
pub use log::{Event, EventLog, LogEntry};
pub use run::{rebuild_sim_port, run_simulated, sim_classifier, warmup_pairs, SimRunOutcome};

use crate::classifier::ClassifierModel;
use crate::community::PortError;
use crate::corpus::{Millis, TopCategory, DAY_MS, MINUTE_MS};
use crate::generator::ResponseSource;
use crate::text::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponderKind {
    Neural,
    Bm25,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub overlooked_threshold_ms: Millis,
    pub track_window_ms: Millis,
    pub hitl_timeout_ms: Millis,
    pub arm_probability: f64,
    pub poll_interval_ms: Millis,
    /// Spacing of tracking sweeps over open windows.
    pub track_interval_ms: Millis,
    /// Whether the poster's own comments count as a response when deciding
    /// whether a post is overlooked.
    pub poster_comments_cancel: bool,
    pub responder: ResponderKind,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            overlooked_threshold_ms: 10 * MINUTE_MS,
            track_window_ms: 7 * DAY_MS,
            hitl_timeout_ms: 10_000,
            arm_probability: 0.5,
            poll_interval_ms: MINUTE_MS,
            track_interval_ms: 60 * MINUTE_MS,
            poster_comments_cancel: false,
            responder: ResponderKind::Neural,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let durations =
            [self.overlooked_threshold_ms, self.track_window_ms, self.hitl_timeout_ms, self.poll_interval_ms, self.track_interval_ms];
        if durations.iter().any(|d| *d <= 0) {
            return Err(PipelineError::InvalidConfig("durations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.arm_probability) {
            return Err(PipelineError::InvalidConfig("arm_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Experiment,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Informational,
    GenerationFailedNoFallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub post_id: String,
    pub arm: Arm,
    pub enrolled_at: Millis,
    pub category: TopCategory,
    pub bot_response_id: Option<String>,
    pub window_end: Millis,
    pub skip_reason: Option<SkipReason>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    AutoApproved,
    Approved,
    Replaced,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReview {
    pub review_id: String,
    pub post_id: String,
    pub draft_text: String,
    pub source: ResponseSource,
    pub created_at: Millis,
    pub deadline: Millis,
    pub state: ReviewState,
    pub final_text: Option<String>,
    pub operator_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "text", rename_all = "snake_case")]
pub enum ResolveAction {
    Approve,
    Replace(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Port(#[from] PortError),
    #[error("post {0} is already enrolled")]
    DoubleEnrollment(String),
    #[error("post {0} has not been seen or classified")]
    UnknownPost(String),
    #[error("post {0} is not in the experiment arm")]
    NotExperiment(String),
    #[error("unknown review {0}")]
    UnknownReview(String),
    #[error("review {0} is closed")]
    ReviewClosed(String),
    #[error("replacement text is empty")]
    EmptyText,
    #[error("classifier unavailable: {0}")]
    Classifier(String),
    #[error("event log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("simulator: {0}")]
    Sim(#[from] crate::community::SimError),
}

/// The top-level routing decision on a post.
pub trait PostClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<TopCategory, PipelineError>;
}

impl PostClassifier for ClassifierModel {
    fn classify(&self, text: &str) -> Result<TopCategory, PipelineError> {
        Ok(self.predict(text).label)
    }
}

/// Marks a post informational iff one of its tokens is a keyword.
#[derive(Clone, Debug)]
pub struct KeywordClassifier {
    keywords: BTreeSet<String>,
    tokenizer: Tokenizer,
}

impl KeywordClassifier {
    pub fn new<S: AsRef<str>>(keywords: &[S], tokenizer: Tokenizer) -> Self {
        let keywords = keywords.iter().flat_map(|k| tokenizer.tokenize(k.as_ref())).collect();
        Self { keywords, tokenizer }
    }
}

impl PostClassifier for KeywordClassifier {
    fn classify(&self, text: &str) -> Result<TopCategory, PipelineError> {
        let hit = self.tokenizer.tokenize(text).iter().any(|t| self.keywords.contains(t));
        Ok(if hit { TopCategory::Informational } else { TopCategory::NonInformational })
    }
}
