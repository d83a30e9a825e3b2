//! Seeded discrete-event simulation of forum traffic.
//!
//! Posts arrive as a Poisson process. A thread stays silent with probability
//! `p_no_response`; otherwise its first human reply arrives after a
//! log-normal delay. From its first non-poster response on, a thread is
//! active: further human replies arrive with exponential gaps until the
//! thread's lifespan (itself exponential) runs out. A bot reply multiplies
//! that follow-up hazard by `followup_hazard_boost` and supersedes any
//! pending first human reply. After every non-poster response the poster
//! may come back with a comment whose valence depends on who replied.

use super::sim_text;
use super::{CommunityPort, PortError};
use crate::corpus::{AuthorRole, Millis, Post, PostLabel, ResponseMsg, DAY_MS, HOUR_MS, MINUTE_MS};
use crate::evaluation::ValenceLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

pub const BOT_AUTHOR_ID: &str = "bot";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryMix {
    pub emotional_support: f64,
    pub informational: f64,
    pub sharing_daily_life: f64,
}

impl Default for CategoryMix {
    fn default() -> Self {
        Self { emotional_support: 0.2745, informational: 0.4595, sharing_daily_life: 0.2660 }
    }
}

/// Probabilities of negative, neutral and positive valence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValenceMix {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

impl ValenceMix {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ValenceLabel {
        let u = rng.random::<f64>();
        if u < self.negative {
            ValenceLabel::Negative
        } else if u < self.negative + self.neutral {
            ValenceLabel::Neutral
        } else {
            ValenceLabel::Positive
        }
    }

    fn sum(&self) -> f64 {
        self.negative + self.neutral + self.positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub seed: u64,
    /// Epoch ms of the simulation start.
    pub start_ms: Millis,
    /// Posts arrive during `[start_ms, start_ms + duration_ms)`.
    pub duration_ms: Millis,
    pub post_arrival_rate_per_hour: f64,
    pub category_mix: CategoryMix,
    pub first_response_median_min: f64,
    pub first_response_sigma: f64,
    pub p_no_response: f64,
    /// Mean gap between follow-up human replies in an active thread.
    pub followup_mean_gap_min: f64,
    pub followup_hazard_boost: f64,
    pub mean_thread_lifespan_days: f64,
    pub poster_return_probability: f64,
    pub poster_return_mean_min: f64,
    pub member_pool: usize,
    pub original_valence: ValenceMix,
    pub poster_valence_after_bot: ValenceMix,
    pub poster_valence_after_human: ValenceMix,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            start_ms: 1_565_000_000_000,
            duration_ms: 7 * DAY_MS,
            post_arrival_rate_per_hour: 20.0,
            category_mix: CategoryMix::default(),
            first_response_median_min: 10.0,
            first_response_sigma: 1.0,
            p_no_response: 0.18,
            followup_mean_gap_min: 480.0,
            followup_hazard_boost: 1.0,
            mean_thread_lifespan_days: 6.0,
            poster_return_probability: 0.4,
            poster_return_mean_min: 60.0,
            member_pool: 2000,
            original_valence: ValenceMix { negative: 0.49, neutral: 0.29, positive: 0.22 },
            poster_valence_after_bot: ValenceMix { negative: 0.13, neutral: 0.62, positive: 0.25 },
            poster_valence_after_human: ValenceMix { negative: 0.14, neutral: 0.76, positive: 0.10 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot advance to {until}: clock is already at {clock}")]
    TimeRegression { clock: Millis, until: Millis },
    #[error("unknown post {0}")]
    UnknownPost(String),
}

impl SimScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.into()));
        let mix = &self.category_mix;
        let probs = [mix.emotional_support, mix.informational, mix.sharing_daily_life, self.p_no_response, self.poster_return_probability];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if (mix.emotional_support + mix.informational + mix.sharing_daily_life - 1.0).abs() > 1e-9 {
            return bad("category_mix must sum to 1");
        }
        for v in [&self.original_valence, &self.poster_valence_after_bot, &self.poster_valence_after_human] {
            if [v.negative, v.neutral, v.positive].iter().any(|p| !(0.0..=1.0).contains(p)) || (v.sum() - 1.0).abs() > 1e-9 {
                return bad("valence mixes must be probabilities summing to 1");
            }
        }
        let positive = [
            self.post_arrival_rate_per_hour,
            self.first_response_median_min,
            self.first_response_sigma,
            self.followup_mean_gap_min,
            self.followup_hazard_boost,
            self.mean_thread_lifespan_days,
            self.poster_return_mean_min,
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("rates, means and the boost must be positive");
        }
        if self.duration_ms < 0 || self.member_pool < 2 {
            return bad("duration must be non-negative and the member pool at least 2");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Post(Post),
    Response(ResponseMsg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Arrival,
    FirstHuman { thread: usize, epoch: u32 },
    FollowUp { thread: usize, epoch: u32 },
    PosterReturn { thread: usize, after_bot: bool },
}

#[derive(Clone, Debug)]
struct Thread {
    post: usize,
    horizon_end: Millis,
    /// Bumped whenever pending human replies are superseded.
    epoch: u32,
    boosted: bool,
}

/// Simulation state: clock, event queue, everything emitted so far and the
/// random stream.
#[derive(Clone, Debug)]
pub struct SimState {
    scenario: SimScenario,
    clock: Millis,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(Millis, u64, Pending)>>,
    seq: u64,
    posts: Vec<Post>,
    responses: Vec<ResponseMsg>,
    threads: Vec<Thread>,
    by_post: HashMap<String, usize>,
    thread_responses: Vec<Vec<usize>>,
}

fn exp_ms<R: Rng + ?Sized>(rng: &mut R, mean_ms: f64) -> Millis {
    let d = Exp::new(1.0 / mean_ms).expect("positive mean");
    d.sample(rng).round() as Millis
}

impl SimState {
    pub fn new(scenario: SimScenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let mut s = Self {
            clock: scenario.start_ms,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            queue: BinaryHeap::new(),
            seq: 0,
            posts: Vec::new(),
            responses: Vec::new(),
            threads: Vec::new(),
            by_post: HashMap::new(),
            thread_responses: Vec::new(),
            scenario,
        };
        let first = s.scenario.start_ms + s.arrival_gap();
        s.schedule_arrival(first);
        Ok(s)
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn responses(&self) -> &[ResponseMsg] {
        &self.responses
    }

    pub fn thread(&self, post_id: &str) -> impl Iterator<Item = &ResponseMsg> {
        self.by_post.get(post_id).into_iter().flat_map(move |&t| self.thread_responses[t].iter().map(move |&i| &self.responses[i]))
    }

    fn arrival_gap(&mut self) -> Millis {
        exp_ms(&mut self.rng, HOUR_MS as f64 / self.scenario.post_arrival_rate_per_hour).max(1)
    }

    fn schedule_arrival(&mut self, at: Millis) {
        if at < self.scenario.start_ms + self.scenario.duration_ms {
            self.push(at, Pending::Arrival);
        }
    }

    fn push(&mut self, at: Millis, ev: Pending) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, ev)));
    }

    fn member(&mut self, not: &str) -> String {
        loop {
            let id = format!("m{}", self.rng.random_range(0..self.scenario.member_pool));
            if id != not {
                return id;
            }
        }
    }

    /// Processes every queued event with time `<= until` and sets the clock
    /// to `until`.
    pub fn advance(&mut self, until: Millis) -> Result<Vec<SimEvent>, SimError> {
        if until < self.clock {
            return Err(SimError::TimeRegression { clock: self.clock, until });
        }
        let mut out = Vec::new();
        while let Some(&Reverse((at, _, ev))) = self.queue.peek() {
            if at > until {
                break;
            }
            self.queue.pop();
            self.clock = at;
            self.fire(at, ev, &mut out);
        }
        self.clock = until;
        Ok(out)
    }

    fn fire(&mut self, at: Millis, ev: Pending, out: &mut Vec<SimEvent>) {
        match ev {
            Pending::Arrival => {
                out.push(SimEvent::Post(self.new_post(at)));
                let next = at + self.arrival_gap();
                self.schedule_arrival(next);
            }
            Pending::FirstHuman { thread, epoch } | Pending::FollowUp { thread, epoch } => {
                if self.threads[thread].epoch != epoch {
                    return;
                }
                let poster = self.posts[self.threads[thread].post].author_id.clone();
                let author = self.member(&poster);
                let text = sim_text::reply_text(&mut self.rng);
                let r = self.store_response(thread, author, AuthorRole::Human, text, at, None);
                out.push(SimEvent::Response(r));
                self.after_response(thread, at, false);
            }
            Pending::PosterReturn { thread, after_bot } => {
                let poster = self.posts[self.threads[thread].post].author_id.clone();
                let mix = if after_bot { self.scenario.poster_valence_after_bot } else { self.scenario.poster_valence_after_human };
                let valence = mix.sample(&mut self.rng);
                let text = sim_text::poster_text(&mut self.rng);
                let r = self.store_response(thread, poster, AuthorRole::Poster, text, at, Some(valence));
                out.push(SimEvent::Response(r));
            }
        }
    }

    fn new_post(&mut self, at: Millis) -> Post {
        let mix = self.scenario.category_mix;
        let u = self.rng.random::<f64>();
        let label = if u < mix.emotional_support {
            PostLabel::EmotionalSupport
        } else if u < mix.emotional_support + mix.informational {
            PostLabel::Informational
        } else {
            PostLabel::SharingDailyLife
        };
        let author = format!("m{}", self.rng.random_range(0..self.scenario.member_pool));
        let text = sim_text::post_text(&mut self.rng, label);
        let valence = self.scenario.original_valence.sample(&mut self.rng);
        let post = Post {
            id: format!("p{}", self.posts.len() + 1),
            author_id: author,
            text,
            created_at: at,
            has_image: false,
            forum_id: "sim".into(),
            category: Some(label),
            valence: Some(valence),
        };
        let dormant = self.rng.random::<f64>() < self.scenario.p_no_response;
        let lifespan = exp_ms(&mut self.rng, self.scenario.mean_thread_lifespan_days * DAY_MS as f64);
        let thread = self.threads.len();
        self.threads.push(Thread { post: self.posts.len(), horizon_end: at + lifespan, epoch: 0, boosted: false });
        self.thread_responses.push(Vec::new());
        self.by_post.insert(post.id.clone(), thread);
        if !dormant {
            let mu = (self.scenario.first_response_median_min * MINUTE_MS as f64).ln();
            let d = LogNormal::new(mu, self.scenario.first_response_sigma).expect("valid log-normal");
            let delay = (d.sample(&mut self.rng).round() as Millis).max(1);
            self.push(at + delay, Pending::FirstHuman { thread, epoch: 0 });
        }
        self.posts.push(post.clone());
        post
    }

    fn store_response(
        &mut self,
        thread: usize,
        author_id: String,
        role: AuthorRole,
        text: String,
        at: Millis,
        valence: Option<ValenceLabel>,
    ) -> ResponseMsg {
        let r = ResponseMsg {
            id: format!("r{}", self.responses.len() + 1),
            post_id: self.posts[self.threads[thread].post].id.clone(),
            author_id,
            author_role: role,
            text,
            created_at: at,
            valence,
        };
        self.thread_responses[thread].push(self.responses.len());
        self.responses.push(r.clone());
        r
    }

    /// Reschedules the thread's next follow-up after a non-poster response.
    /// Exponential gaps are memoryless, so drawing a fresh gap from `at`
    /// is equivalent to keeping the pending one when the rate is unchanged.
    fn after_response(&mut self, thread: usize, at: Millis, from_bot: bool) {
        let s = &self.scenario;
        let (boost, mean_gap, p_return, return_mean) =
            (s.followup_hazard_boost, s.followup_mean_gap_min, s.poster_return_probability, s.poster_return_mean_min);
        let th = &mut self.threads[thread];
        th.epoch += 1;
        if from_bot {
            th.boosted = true;
        }
        let rate_mult = if th.boosted { boost } else { 1.0 };
        let (epoch, horizon) = (th.epoch, th.horizon_end);
        let gap = exp_ms(&mut self.rng, mean_gap * MINUTE_MS as f64 / rate_mult).max(1);
        if at + gap <= horizon {
            self.push(at + gap, Pending::FollowUp { thread, epoch });
        }
        if self.rng.random::<f64>() < p_return {
            let delay = exp_ms(&mut self.rng, return_mean * MINUTE_MS as f64).max(1);
            if at + delay <= horizon {
                self.push(at + delay, Pending::PosterReturn { thread, after_bot: from_bot });
            }
        }
    }

    /// Stores an externally published reply at the current clock. Bot
    /// replies boost the thread's follow-up hazard.
    pub fn publish(&mut self, post_id: &str, text: &str, role: AuthorRole) -> Result<ResponseMsg, SimError> {
        let thread = *self.by_post.get(post_id).ok_or_else(|| SimError::UnknownPost(post_id.into()))?;
        let at = self.clock;
        let author = match role {
            AuthorRole::Bot | AuthorRole::Operator => BOT_AUTHOR_ID.to_string(),
            AuthorRole::Poster => self.posts[self.threads[thread].post].author_id.clone(),
            AuthorRole::Human => {
                let poster = self.posts[self.threads[thread].post].author_id.clone();
                self.member(&poster)
            }
        };
        let r = self.store_response(thread, author, role, text.to_string(), at, None);
        if role != AuthorRole::Poster {
            self.after_response(thread, at, matches!(role, AuthorRole::Bot | AuthorRole::Operator));
        }
        Ok(r)
    }
}

pub fn sim_advance(state: &mut SimState, until: Millis) -> Result<Vec<SimEvent>, SimError> {
    state.advance(until)
}

/// A [`CommunityPort`] reading from and publishing into a simulation.
#[derive(Clone, Debug)]
pub struct SimPort {
    state: SimState,
}

impl SimPort {
    pub fn new(state: SimState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn into_state(self) -> SimState {
        self.state
    }

    pub fn advance(&mut self, until: Millis) -> Result<Vec<SimEvent>, SimError> {
        self.state.advance(until)
    }
}

impl CommunityPort for SimPort {
    fn fetch_posts(&mut self, since: Millis) -> Result<Vec<Post>, PortError> {
        // posts are stored in arrival order, which is creation order
        let start = self.state.posts.partition_point(|p| p.created_at <= since);
        Ok(self.state.posts[start..].to_vec())
    }

    fn fetch_responses(&mut self, post_id: &str, since: Millis) -> Result<Vec<ResponseMsg>, PortError> {
        if !self.state.by_post.contains_key(post_id) {
            return Err(PortError::UnknownPost(post_id.into()));
        }
        Ok(self.state.thread(post_id).filter(|r| r.created_at > since).cloned().collect())
    }

    fn publish(&mut self, post_id: &str, text: &str, author_role: AuthorRole) -> Result<ResponseMsg, PortError> {
        self.state.publish(post_id, text, author_role).map_err(|e| match e {
            SimError::UnknownPost(p) => PortError::UnknownPost(p),
            other => PortError::Malformed(other.to_string()),
        })
    }
}
