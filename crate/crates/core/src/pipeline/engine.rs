use super::log::{Event, EventLog, LogEntry};
use super::{Arm, ExperimentRecord, PendingReview, PipelineConfig, PipelineError, PostClassifier, ResolveAction, ReviewState, SkipReason};
use crate::community::CommunityPort;
use crate::corpus::{AuthorRole, Millis, Post, ResponseMsg, TopCategory};
use crate::generator::{Responder, ResponseSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Everything the pipeline knows; a pure function of the event log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineState {
    clock: Option<Millis>,
    posts: BTreeMap<String, Post>,
    post_cursor: Option<Millis>,
    /// Seen posts not yet answered, excluded or enrolled, keyed by the time
    /// they become overlooked.
    undecided: BTreeSet<(Millis, String)>,
    answered: BTreeSet<String>,
    classified: BTreeMap<String, TopCategory>,
    excluded: BTreeMap<String, SkipReason>,
    records: BTreeMap<String, ExperimentRecord>,
    enrollment_order: Vec<String>,
    awaiting_draft: BTreeSet<String>,
    reviews: BTreeMap<String, PendingReview>,
    review_of_post: BTreeMap<String, String>,
    /// Reviews without a Published event.
    unpublished: BTreeSet<String>,
    intents: BTreeSet<String>,
    published: BTreeMap<String, ResponseMsg>,
    observed: BTreeMap<String, Vec<ResponseMsg>>,
    observed_ids: BTreeSet<String>,
    open_windows: BTreeSet<(Millis, String)>,
    closed: BTreeSet<String>,
    last_sweep: Option<Millis>,
}

impl PipelineState {
    /// Timestamp of the latest event.
    pub fn clock(&self) -> Option<Millis> {
        self.clock
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.get(id)
    }

    pub fn posts_seen(&self) -> usize {
        self.posts.len()
    }

    pub fn record(&self, post_id: &str) -> Option<&ExperimentRecord> {
        self.records.get(post_id)
    }

    /// Records in enrollment order.
    pub fn records(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.enrollment_order.iter().map(|id| &self.records[id])
    }

    pub fn excluded(&self) -> &BTreeMap<String, SkipReason> {
        &self.excluded
    }

    pub fn is_answered(&self, post_id: &str) -> bool {
        self.answered.contains(post_id)
    }

    pub fn review(&self, review_id: &str) -> Option<&PendingReview> {
        self.reviews.get(review_id)
    }

    pub fn reviews(&self) -> impl Iterator<Item = &PendingReview> {
        self.reviews.values()
    }

    pub fn review_for_post(&self, post_id: &str) -> Option<&PendingReview> {
        self.review_of_post.get(post_id).map(|r| &self.reviews[r])
    }

    /// Reviews still awaiting a decision, earliest deadline first.
    pub fn pending_reviews(&self) -> Vec<&PendingReview> {
        let mut v: Vec<_> = self.unpublished.iter().map(|id| &self.reviews[id]).filter(|r| r.state == ReviewState::Pending).collect();
        v.sort_by(|a, b| (a.deadline, &a.review_id).cmp(&(b.deadline, &b.review_id)));
        v
    }

    pub fn published(&self, review_id: &str) -> Option<&ResponseMsg> {
        self.published.get(review_id)
    }

    /// Tracked responses of an enrolled post in arrival order.
    pub fn thread(&self, post_id: &str) -> &[ResponseMsg] {
        self.observed.get(post_id).map_or(&[], Vec::as_slice)
    }

    pub fn is_closed(&self, post_id: &str) -> bool {
        self.closed.contains(post_id)
    }

    pub fn open_windows(&self) -> usize {
        self.open_windows.len()
    }

    pub fn undecided(&self) -> usize {
        self.undecided.len()
    }

    pub fn unpublished(&self) -> usize {
        self.unpublished.len()
    }

    pub fn post_cursor(&self) -> Option<Millis> {
        self.post_cursor
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TickReport {
    pub published: Vec<ResponseMsg>,
    pub enrolled: Vec<ExperimentRecord>,
    pub port_errors: usize,
}

pub struct Pipeline {
    config: PipelineConfig,
    state: PipelineState,
    log: EventLog,
}

impl Pipeline {
    /// Builds a pipeline whose state is the replay of `log`.
    pub fn new(config: PipelineConfig, log: EventLog) -> Result<Self, PipelineError> {
        config.validate()?;
        let state = Self::replay(&config, log.entries());
        Ok(Self { config, state, log })
    }

    pub fn replay(config: &PipelineConfig, entries: &[LogEntry]) -> PipelineState {
        let mut state = PipelineState::default();
        for e in entries {
            apply(config, &mut state, e);
        }
        state
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn entries(&self) -> &[LogEntry] {
        self.log.entries()
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn sync(&mut self) -> Result<(), PipelineError> {
        self.log.sync()
    }

    fn emit(&mut self, now: Millis, event: Event) -> Result<(), PipelineError> {
        let entry = LogEntry { timestamp: now, event };
        self.log.append(entry.clone())?;
        apply(&self.config, &mut self.state, &entry);
        Ok(())
    }

    /// One control-loop pass: publish due reviews, pick up new posts, enroll
    /// and draft for overlooked ones, and track open windows. Port failures
    /// are logged and retried on the next tick.
    pub fn tick<P: CommunityPort + ?Sized>(
        &mut self,
        port: &mut P,
        classifier: &dyn PostClassifier,
        responder: &dyn Responder,
        now: Millis,
    ) -> Result<TickReport, PipelineError> {
        let mut report = TickReport::default();
        report.published = self.hitl_tick(port, now, &mut report.port_errors)?;

        let overlooked = match self.scan_overlooked(port, now) {
            Ok(v) => v,
            Err(PipelineError::Port(e)) => {
                log::warn!("scan failed at {now}: {e}");
                report.port_errors += 1;
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        for post in overlooked {
            let category = match self.classify_post(&post.id, classifier, now) {
                Ok(c) => c,
                Err(PipelineError::Classifier(e)) => {
                    log::warn!("classification of {} failed: {e}", post.id);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if category == TopCategory::Informational {
                self.emit(now, Event::Skipped { post_id: post.id, reason: SkipReason::Informational })?;
            } else {
                report.enrolled.push(self.enroll(&post.id, now)?);
            }
        }
        let waiting: Vec<String> = self.state.awaiting_draft.iter().cloned().collect();
        for post_id in waiting {
            self.process_experiment_post(&post_id, responder, now)?;
        }

        self.track(port, now, &mut report.port_errors)?;
        Ok(report)
    }

    /// Earliest time after `now` at which a tick has work that depends on
    /// the clock alone.
    pub fn next_wakeup(&self, now: Millis) -> Option<Millis> {
        let s = &self.state;
        let undecided = s.undecided.iter().map(|(t, _)| *t).find(|t| *t > now);
        let deadline = s
            .unpublished
            .iter()
            .map(|id| &s.reviews[id])
            .filter(|r| r.state == ReviewState::Pending && r.deadline > now)
            .map(|r| r.deadline)
            .min();
        let window = s.open_windows.iter().map(|(t, _)| *t).find(|t| *t > now);
        let sweep = if s.open_windows.is_empty() {
            None
        } else {
            Some(s.last_sweep.map_or(now + 1, |t| (t + self.config.track_interval_ms).max(now + 1)))
        };
        [undecided, deadline, window, sweep].into_iter().flatten().min()
    }

    /// Records newly visible posts and returns the ones that have gone
    /// `overlooked_threshold` without a qualifying response.
    pub fn scan_overlooked<P: CommunityPort + ?Sized>(&mut self, port: &mut P, now: Millis) -> Result<Vec<Post>, PipelineError> {
        let since = self.state.post_cursor.map_or(Millis::MIN, |c| c - 1);
        for post in port.fetch_posts(since)? {
            if !self.state.posts.contains_key(&post.id) {
                self.emit(now, Event::PostSeen { post })?;
            }
        }
        let due: Vec<String> = self.state.undecided.iter().take_while(|(t, _)| *t <= now).map(|(_, id)| id.clone()).collect();
        let mut out = Vec::new();
        for id in due {
            if !self.state.classified.contains_key(&id) {
                let responses = match port.fetch_responses(&id, Millis::MIN) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("cannot check {id}: {e}");
                        continue;
                    }
                };
                if responses.iter().any(|r| r.created_at <= now && self.qualifies(r.author_role)) {
                    self.emit(now, Event::Answered { post_id: id })?;
                    continue;
                }
            }
            out.push(self.state.posts[&id].clone());
        }
        Ok(out)
    }

    fn qualifies(&self, role: AuthorRole) -> bool {
        role == AuthorRole::Human || (role == AuthorRole::Poster && self.config.poster_comments_cancel)
    }

    pub fn classify_post(&mut self, post_id: &str, classifier: &dyn PostClassifier, now: Millis) -> Result<TopCategory, PipelineError> {
        if let Some(c) = self.state.classified.get(post_id) {
            return Ok(*c);
        }
        let post = self.state.posts.get(post_id).ok_or_else(|| PipelineError::UnknownPost(post_id.into()))?;
        let category = classifier.classify(&post.text)?;
        self.emit(now, Event::Classified { post_id: post_id.into(), category })?;
        Ok(category)
    }

    /// Randomizes a classified post into an arm. Draw `i` uses stream `i` of
    /// the seeded generator, so arms depend only on the seed and the
    /// enrollment order.
    pub fn enroll(&mut self, post_id: &str, now: Millis) -> Result<ExperimentRecord, PipelineError> {
        if self.state.records.contains_key(post_id) {
            return Err(PipelineError::DoubleEnrollment(post_id.into()));
        }
        let category = *self.state.classified.get(post_id).ok_or_else(|| PipelineError::UnknownPost(post_id.into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.state.enrollment_order.len() as u64);
        let arm = if rng.random::<f64>() < self.config.arm_probability { Arm::Experiment } else { Arm::Control };
        let record = ExperimentRecord {
            post_id: post_id.into(),
            arm,
            enrolled_at: now,
            category,
            bot_response_id: None,
            window_end: now + self.config.track_window_ms,
            skip_reason: None,
        };
        self.emit(now, Event::Enrolled { record: record.clone() })?;
        Ok(record)
    }

    /// Drafts a reply for an experiment-arm post and submits it for review,
    /// or records why no reply will be sent. Idempotent.
    pub fn process_experiment_post(
        &mut self,
        post_id: &str,
        responder: &dyn Responder,
        now: Millis,
    ) -> Result<ExperimentRecord, PipelineError> {
        let record = self.state.records.get(post_id).ok_or_else(|| PipelineError::UnknownPost(post_id.into()))?;
        if record.arm != Arm::Experiment {
            return Err(PipelineError::NotExperiment(post_id.into()));
        }
        if !self.state.awaiting_draft.contains(post_id) {
            return Ok(record.clone());
        }
        if record.category == TopCategory::Informational {
            self.emit(now, Event::Skipped { post_id: post_id.into(), reason: SkipReason::Informational })?;
        } else {
            let text = self.state.posts[post_id].text.clone();
            match responder.respond(&text) {
                Ok((draft, source)) => {
                    self.hitl_submit(post_id, draft, source, now)?;
                }
                Err(e) => {
                    log::warn!("no reply for {post_id}: {e}");
                    self.emit(now, Event::Skipped { post_id: post_id.into(), reason: SkipReason::GenerationFailedNoFallback })?;
                }
            }
        }
        Ok(self.state.records[post_id].clone())
    }

    pub fn hitl_submit(
        &mut self,
        post_id: &str,
        draft: String,
        source: ResponseSource,
        now: Millis,
    ) -> Result<PendingReview, PipelineError> {
        let review = PendingReview {
            review_id: format!("rv{}", self.state.reviews.len() + 1),
            post_id: post_id.into(),
            draft_text: draft,
            source,
            created_at: now,
            deadline: now + self.config.hitl_timeout_ms,
            state: ReviewState::Pending,
            final_text: None,
            operator_id: None,
        };
        self.emit(now, Event::DraftCreated { review: review.clone() })?;
        Ok(review)
    }

    /// Operator decision on a pending review; allowed only before its
    /// deadline.
    pub fn hitl_resolve(
        &mut self,
        review_id: &str,
        action: ResolveAction,
        operator_id: &str,
        now: Millis,
    ) -> Result<PendingReview, PipelineError> {
        let review = self.state.reviews.get(review_id).ok_or_else(|| PipelineError::UnknownReview(review_id.into()))?;
        if review.state != ReviewState::Pending || now >= review.deadline {
            return Err(PipelineError::ReviewClosed(review_id.into()));
        }
        let (state, final_text) = match action {
            ResolveAction::Approve => (ReviewState::Approved, review.draft_text.clone()),
            ResolveAction::Replace(t) if t.trim().is_empty() => return Err(PipelineError::EmptyText),
            ResolveAction::Replace(t) => (ReviewState::Replaced, t),
        };
        self.emit(now, Event::ReviewResolved { review_id: review_id.into(), state, final_text, operator_id: Some(operator_id.into()) })?;
        Ok(self.state.reviews[review_id].clone())
    }

    /// Auto-approves reviews whose deadline has passed and publishes every
    /// resolved review exactly once, under the bot identity.
    pub fn hitl_tick<P: CommunityPort + ?Sized>(
        &mut self,
        port: &mut P,
        now: Millis,
        port_errors: &mut usize,
    ) -> Result<Vec<ResponseMsg>, PipelineError> {
        let mut out = Vec::new();
        let ids: Vec<String> = self.state.unpublished.iter().cloned().collect();
        for id in ids {
            let review = &self.state.reviews[&id];
            if review.state == ReviewState::Pending {
                if review.deadline > now {
                    continue;
                }
                let final_text = review.draft_text.clone();
                self.emit(
                    now,
                    Event::ReviewResolved { review_id: id.clone(), state: ReviewState::AutoApproved, final_text, operator_id: None },
                )?;
            }
            match self.publish_review(port, &id, now) {
                Ok(r) => out.push(r),
                Err(PipelineError::Port(e)) => {
                    log::warn!("publishing {id} failed: {e}");
                    *port_errors += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    fn publish_review<P: CommunityPort + ?Sized>(
        &mut self,
        port: &mut P,
        review_id: &str,
        now: Millis,
    ) -> Result<ResponseMsg, PipelineError> {
        let review = self.state.reviews[review_id].clone();
        let text = review.final_text.clone().expect("resolved review has final text");
        if self.state.intents.contains(review_id) {
            // an earlier attempt may have reached the community
            let prior = port
                .fetch_responses(&review.post_id, review.created_at - 1)?
                .into_iter()
                .find(|r| r.author_role == AuthorRole::Bot && r.text == text);
            if let Some(response) = prior {
                self.emit(now, Event::Published { review_id: review_id.into(), response: response.clone() })?;
                return Ok(response);
            }
        } else {
            self.emit(now, Event::PublishIntent { review_id: review_id.into() })?;
        }
        let response = port.publish(&review.post_id, &text, AuthorRole::Bot)?;
        self.emit(now, Event::Published { review_id: review_id.into(), response: response.clone() })?;
        Ok(response)
    }

    /// Logs new responses on open windows. A full sweep runs every
    /// `track_interval`; windows that have ended get a final fetch and are
    /// closed.
    pub fn track<P: CommunityPort + ?Sized>(&mut self, port: &mut P, now: Millis, port_errors: &mut usize) -> Result<(), PipelineError> {
        if self.state.open_windows.is_empty() {
            return Ok(());
        }
        let sweep = self.state.last_sweep.is_none_or(|t| now >= t + self.config.track_interval_ms);
        let targets: Vec<(Millis, String)> = if sweep {
            self.state.open_windows.iter().cloned().collect()
        } else {
            self.state.open_windows.iter().take_while(|(t, _)| *t <= now).cloned().collect()
        };
        for (window_end, post_id) in targets {
            let since = self.state.observed.get(&post_id).and_then(|v| v.last()).map_or(Millis::MIN, |r| r.created_at - 1);
            let fresh = match port.fetch_responses(&post_id, since) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("tracking {post_id} failed: {e}");
                    *port_errors += 1;
                    continue;
                }
            };
            for r in fresh {
                if r.created_at <= window_end && !self.state.observed_ids.contains(&r.id) {
                    self.emit(now, Event::Observed { response: r })?;
                }
            }
            if window_end <= now {
                self.emit(now, Event::WindowClosed { post_id })?;
            }
        }
        // logged last so a sweep cut short by a crash is redone on restart
        if sweep {
            self.emit(now, Event::TrackSweep)?;
        }
        Ok(())
    }
}

fn apply(config: &PipelineConfig, s: &mut PipelineState, entry: &LogEntry) {
    s.clock = Some(entry.timestamp);
    match &entry.event {
        Event::PostSeen { post } => {
            s.post_cursor = Some(s.post_cursor.map_or(post.created_at, |c| c.max(post.created_at)));
            s.undecided.insert((post.created_at + config.overlooked_threshold_ms, post.id.clone()));
            s.posts.insert(post.id.clone(), post.clone());
        }
        Event::Answered { post_id } => {
            remove_undecided(config, s, post_id);
            s.answered.insert(post_id.clone());
        }
        Event::Classified { post_id, category } => {
            s.classified.insert(post_id.clone(), *category);
        }
        Event::Skipped { post_id, reason } => {
            if let Some(r) = s.records.get_mut(post_id) {
                r.skip_reason = Some(*reason);
                s.awaiting_draft.remove(post_id);
            } else {
                remove_undecided(config, s, post_id);
                s.excluded.insert(post_id.clone(), *reason);
            }
        }
        Event::Enrolled { record } => {
            remove_undecided(config, s, &record.post_id);
            if record.arm == Arm::Experiment {
                s.awaiting_draft.insert(record.post_id.clone());
            }
            s.open_windows.insert((record.window_end, record.post_id.clone()));
            s.enrollment_order.push(record.post_id.clone());
            s.records.insert(record.post_id.clone(), record.clone());
        }
        Event::DraftCreated { review } => {
            s.awaiting_draft.remove(&review.post_id);
            s.review_of_post.insert(review.post_id.clone(), review.review_id.clone());
            s.unpublished.insert(review.review_id.clone());
            s.reviews.insert(review.review_id.clone(), review.clone());
        }
        Event::ReviewResolved { review_id, state, final_text, operator_id } => {
            if let Some(r) = s.reviews.get_mut(review_id) {
                r.state = *state;
                r.final_text = Some(final_text.clone());
                r.operator_id = operator_id.clone();
            }
        }
        Event::PublishIntent { review_id } => {
            s.intents.insert(review_id.clone());
        }
        Event::Published { review_id, response } => {
            s.unpublished.remove(review_id);
            if let Some(r) = s.records.get_mut(&response.post_id) {
                r.bot_response_id = Some(response.id.clone());
            }
            s.published.insert(review_id.clone(), response.clone());
        }
        Event::Observed { response } => {
            s.observed_ids.insert(response.id.clone());
            s.observed.entry(response.post_id.clone()).or_default().push(response.clone());
        }
        Event::TrackSweep => s.last_sweep = Some(entry.timestamp),
        Event::WindowClosed { post_id } => {
            if let Some(r) = s.records.get(post_id) {
                s.open_windows.remove(&(r.window_end, post_id.clone()));
            }
            s.closed.insert(post_id.clone());
        }
    }
}

fn remove_undecided(config: &PipelineConfig, s: &mut PipelineState, post_id: &str) {
    if let Some(p) = s.posts.get(post_id) {
        s.undecided.remove(&(p.created_at + config.overlooked_threshold_ms, post_id.to_string()));
    }
}
