//! Live pipeline state shared by the polling loop and the HTTP API.

use crate::config::{load_scenario, ConfigError, ServiceConfig};
use serde::Serialize;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::Instant;
use supportbot_core::classifier::ClassifierModel;
use supportbot_core::community::{CommunityPort, PortError, RestPort, SimPort, SimScenario};
use supportbot_core::corpus::{first_reply_pairs, load_corpus_file, LoadOptions, Millis, PairExample, Post, ResponseMsg};
use supportbot_core::evaluation::{compute_metrics, EvalError, MetricsConfig, MetricsReport};
use supportbot_core::generator::{build_bm25_index, Bm25Index, GenModel, Responder, ResponseSource, WithFallback, DEFAULT_B, DEFAULT_K1};
use supportbot_core::pipeline::{
    rebuild_sim_port, sim_classifier, warmup_pairs, EventLog, ExperimentRecord, PendingReview, Pipeline, PipelineError, PostClassifier,
    ResolveAction, ResponderKind, SkipReason, TickReport,
};
use supportbot_core::text::Tokenizer;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{what} {path}: {message}")]
    Model { what: &'static str, path: String, message: String },
    #[error("{0}")]
    Setup(String),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Millis;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Millis {
        chrono::Utc::now().timestamp_millis()
    }
}

/// Simulated time running `speed` times faster than the wall clock from
/// `origin`.
pub struct SimClock {
    origin: Millis,
    started: Instant,
    speed: f64,
}

impl SimClock {
    pub fn new(origin: Millis, speed: f64) -> Self {
        Self { origin, started: Instant::now(), speed }
    }
}

impl Clock for SimClock {
    fn now(&self) -> Millis {
        self.origin + (self.started.elapsed().as_secs_f64() * 1000.0 * self.speed) as Millis
    }
}

/// Clock moved by hand.
#[derive(Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(at: Millis) -> Self {
        Self(AtomicI64::new(at))
    }

    pub fn set(&self, at: Millis) {
        self.0.store(at, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

/// A community port that may need to be brought up to the current time
/// before it is read.
pub trait LivePort: CommunityPort + Send {
    fn advance(&mut self, _now: Millis) -> Result<(), PortError> {
        Ok(())
    }
}

impl LivePort for RestPort {}

impl LivePort for SimPort {
    fn advance(&mut self, now: Millis) -> Result<(), PortError> {
        SimPort::advance(self, now).map(|_| ()).map_err(|e| PortError::Malformed(e.to_string()))
    }
}

pub struct ServiceParts {
    pub pipeline: Pipeline,
    pub port: Box<dyn LivePort>,
    pub classifier: Box<dyn PostClassifier>,
    pub responder: Box<dyn Responder>,
    pub clock: Arc<dyn Clock>,
    pub simulated: bool,
}

pub struct Service {
    pipeline: Pipeline,
    port: Box<dyn LivePort>,
    classifier: Box<dyn PostClassifier>,
    responder: Box<dyn Responder>,
    clock: Arc<dyn Clock>,
    simulated: bool,
    next_due: Millis,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PendingView {
    pub review_id: String,
    pub post_id: String,
    pub post_text: String,
    pub draft_text: String,
    pub source: ResponseSource,
    pub created_at: Millis,
    pub deadline_ms_epoch: Millis,
    pub server_now_ms: Millis,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostView {
    pub post: Post,
    pub thread: Vec<ResponseMsg>,
    pub record: Option<ExperimentRecord>,
    pub skipped: Option<SkipReason>,
    pub review: Option<PendingReview>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub simulated_clock: Option<Millis>,
    pub server_now_ms: Millis,
    pub posts_seen: usize,
    pub pending: usize,
}

impl Service {
    pub fn new(parts: ServiceParts) -> Self {
        Self {
            pipeline: parts.pipeline,
            port: parts.port,
            classifier: parts.classifier,
            responder: parts.responder,
            clock: parts.clock,
            simulated: parts.simulated,
            next_due: Millis::MIN,
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Never earlier than the last logged event.
    pub fn now(&self) -> Millis {
        let now = self.clock.now();
        self.pipeline.state().clock().map_or(now, |c| now.max(c))
    }

    /// Ticks the pipeline if a poll or a wakeup is due.
    pub fn step(&mut self) -> Result<Option<TickReport>, PipelineError> {
        let now = self.now();
        if now < self.next_due {
            return Ok(None);
        }
        self.port.advance(now)?;
        let report = self.pipeline.tick(self.port.as_mut(), self.classifier.as_ref(), self.responder.as_ref(), now)?;
        self.pipeline.sync()?;
        let poll = now + self.pipeline.config().poll_interval_ms;
        self.next_due = self.pipeline.next_wakeup(now).map_or(poll, |w| w.min(poll));
        Ok(Some(report))
    }

    pub fn pending(&self) -> Vec<PendingView> {
        let now = self.now();
        let state = self.pipeline.state();
        state
            .pending_reviews()
            .into_iter()
            .filter(|r| r.deadline > now)
            .map(|r| PendingView {
                review_id: r.review_id.clone(),
                post_id: r.post_id.clone(),
                post_text: state.post(&r.post_id).map(|p| p.text.clone()).unwrap_or_default(),
                draft_text: r.draft_text.clone(),
                source: r.source,
                created_at: r.created_at,
                deadline_ms_epoch: r.deadline,
                server_now_ms: now,
            })
            .collect()
    }

    /// Resolves a pending review and publishes it at once.
    pub fn resolve(&mut self, review_id: &str, action: ResolveAction, operator_id: &str) -> Result<PendingReview, PipelineError> {
        let now = self.now();
        self.pipeline.hitl_resolve(review_id, action, operator_id, now)?;
        self.next_due = Millis::MIN;
        if let Err(e) = self.step() {
            log::warn!("publishing {review_id} deferred: {e}");
        }
        Ok(self.pipeline.state().review(review_id).cloned().expect("resolved review exists"))
    }

    pub fn metrics(&self) -> Result<MetricsReport, EvalError> {
        compute_metrics(self.pipeline.entries(), &MetricsConfig { require_closed: false, ..Default::default() })
    }

    pub fn post(&self, post_id: &str) -> Option<PostView> {
        let state = self.pipeline.state();
        state.post(post_id).map(|post| PostView {
            post: post.clone(),
            thread: state.thread(post_id).to_vec(),
            record: state.record(post_id).cloned(),
            skipped: state.excluded().get(post_id).copied(),
            review: state.review_for_post(post_id).cloned(),
        })
    }

    pub fn health(&self) -> Health {
        let now = self.now();
        Health {
            status: "ok",
            simulated_clock: self.simulated.then_some(now),
            server_now_ms: now,
            posts_seen: self.pipeline.state().posts_seen(),
            pending: self.pipeline.state().pending_reviews().len(),
        }
    }

    pub fn sync(&mut self) -> Result<(), PipelineError> {
        self.pipeline.sync()
    }
}

fn model_error(what: &'static str, path: &Path, e: impl ToString) -> ServiceError {
    ServiceError::Model { what, path: path.display().to_string(), message: e.to_string() }
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel, ServiceError> {
    ClassifierModel::load(path).map_err(|e| model_error("classifier checkpoint", path, e))
}

pub fn load_generator(path: &Path) -> Result<GenModel, ServiceError> {
    GenModel::load(path).map_err(|e| model_error("generator checkpoint", path, e))
}

pub fn retrieval_index(pairs: &[PairExample]) -> Result<Bm25Index, ServiceError> {
    build_bm25_index(pairs, Tokenizer::default(), DEFAULT_K1, DEFAULT_B).map_err(|e| ServiceError::Setup(e.to_string()))
}

pub fn index_from_corpus(path: &Path) -> Result<Bm25Index, ServiceError> {
    let report = load_corpus_file(path, &LoadOptions::default()).map_err(|e| model_error("retrieval corpus", path, e))?;
    retrieval_index(&first_reply_pairs(&report.corpus))
}

pub type Models = (Box<dyn PostClassifier>, Box<dyn Responder>);

/// Classifier and responder named by the configuration. `scenario` supplies
/// the fallbacks of a simulator-backed service.
pub fn load_models(config: &ServiceConfig, scenario: Option<&SimScenario>) -> Result<Models, ServiceError> {
    let classifier: Box<dyn PostClassifier> = match (&config.models.classifier, scenario) {
        (Some(path), _) => Box::new(load_classifier(path)?),
        (None, Some(_)) => Box::new(sim_classifier()),
        (None, None) => return Err(ServiceError::Setup("no classifier configured".into())),
    };
    let index = match (&config.models.retrieval_corpus, scenario) {
        (Some(path), _) => index_from_corpus(path)?,
        (None, Some(s)) => retrieval_index(&warmup_pairs(s)?)?,
        (None, None) => return Err(ServiceError::Setup("no retrieval corpus configured".into())),
    };
    let responder: Box<dyn Responder> = match config.pipeline.responder {
        ResponderKind::Bm25 => Box::new(index),
        ResponderKind::Neural => {
            let path = config
                .models
                .generator
                .as_ref()
                .ok_or_else(|| ServiceError::Setup("the neural responder needs models.generator".into()))?;
            Box::new(WithFallback { primary: load_generator(path)?, fallback: index })
        }
    };
    Ok((classifier, responder))
}

/// Opens the event log, loads the models and reconnects to the community,
/// resuming from whatever the log already holds.
pub fn build_service(config: &ServiceConfig) -> Result<Service, ServiceError> {
    let scenario = config.community.simulator.as_deref().map(load_scenario).transpose()?;
    let (classifier, responder) = load_models(config, scenario.as_ref())?;
    if let Some(dir) = config.event_log.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(PipelineError::Io)?;
    }
    let log = EventLog::open(&config.event_log)?;
    let pipeline = Pipeline::new(config.pipeline.clone(), log)?;
    let (port, clock, simulated): (Box<dyn LivePort>, Arc<dyn Clock>, bool) = match (&scenario, &config.community.rest) {
        (Some(s), _) => {
            let port = rebuild_sim_port(s, pipeline.entries())?;
            let origin = pipeline.state().clock().map_or(s.start_ms, |c| c.max(s.start_ms));
            (Box::new(port), Arc::new(SimClock::new(origin, config.community.sim_speed)), true)
        }
        (None, Some(rest)) => (Box::new(RestPort::new(rest)), Arc::new(SystemClock), false),
        (None, None) => return Err(ServiceError::Setup("no community source".into())),
    };
    Ok(Service::new(ServiceParts { pipeline, port, classifier, responder, clock, simulated }))
}
