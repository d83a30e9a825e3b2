//! Per-arm experiment measurements computed from a pipeline event log.
//!
//! Definitions, per enrolled post and restricted to its tracking window:
//! - human responses: author role `human`; the poster's comments and bot
//!   replies are excluded. They drive `post_noresp_n`, `post_resp_n` and
//!   `post_member_n`.
//! - replies: every non-poster response, bot included. They drive the
//!   first-response time and the adjacent-response gaps, so posts without a
//!   reply are left out of those means.
//! - the updated valence is that of the poster's first comment after the
//!   first reply.

use super::tests::{chi2_2x2, t_test_ind, TVariant, TestResult};
use super::valence::{valence_change, ValenceChange, ValenceLabel};
use super::{median, EvalError};
use crate::corpus::{AuthorRole, Millis, Post, ResponseMsg, MINUTE_MS};
use crate::pipeline::{Arm, Event, ExperimentRecord, LogEntry};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Number of adjacent reply pairs reported.
    pub adjacent_pairs: usize,
    pub t_variant: TVariant,
    /// Reject logs with windows still open.
    pub require_closed: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { adjacent_pairs: 5, t_variant: TVariant::Pooled, require_closed: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl MeanSd {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { n, mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub n: usize,
    pub median_min: Option<f64>,
    pub mean_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStat {
    /// Pair `k` is the gap between reply `k` and reply `k + 1`.
    pub pair: usize,
    pub n: usize,
    pub mean_min: Option<f64>,
}

/// Fractions over the labelled posts; `None` when no post is labelled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValenceDistribution {
    pub n: usize,
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeFractions {
    pub n: usize,
    pub raise: f64,
    pub drop: f64,
    pub no_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValenceMetrics {
    pub original: Option<ValenceDistribution>,
    pub updated: Option<ValenceDistribution>,
    pub change: Option<ChangeFractions>,
    pub raise_n: usize,
    pub drop_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub post_count: usize,
    pub post_noresp_n: usize,
    pub post_1resp_time: Timing,
    pub first_second_gap: GapStat,
    pub adj_comm_time: Vec<GapStat>,
    pub poster_comm_n: MeanSd,
    pub post_resp_n: MeanSd,
    pub post_member_n: MeanSd,
    /// Share of replied posts whose poster answered the first reply before
    /// a second one arrived.
    pub poster_reply_rate_on_first_reply: Option<f64>,
    /// Share of replies the poster answered before the next reply arrived.
    pub poster_reply_rate_on_replies: Option<f64>,
    pub valence: ValenceMetrics,
}

/// Experiment versus control; `None` where the test is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmTests {
    pub noresp_chi2: Option<TestResult>,
    pub first_response_t: Option<TestResult>,
    pub first_second_gap_t: Option<TestResult>,
    pub poster_comm_t: Option<TestResult>,
    pub post_resp_t: Option<TestResult>,
    pub post_member_t: Option<TestResult>,
    pub raise_chi2: Option<TestResult>,
    pub drop_chi2: Option<TestResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: ArmMetrics,
    pub control: ArmMetrics,
    pub tests: ArmTests,
}

#[derive(Default)]
struct Samples {
    post_count: usize,
    noresp: usize,
    first_resp: Vec<f64>,
    gaps: Vec<Vec<f64>>,
    poster_comm: Vec<f64>,
    resp: Vec<f64>,
    members: Vec<f64>,
    replied_posts: usize,
    answered_first: usize,
    replies: usize,
    answered_replies: usize,
    original: Vec<ValenceLabel>,
    updated: Vec<ValenceLabel>,
    changes: Vec<ValenceChange>,
}

fn minutes(ms: Millis) -> f64 {
    ms as f64 / MINUTE_MS as f64
}

fn is_reply(r: &ResponseMsg) -> bool {
    r.author_role != AuthorRole::Poster
}

impl Samples {
    fn add(&mut self, post: &Post, thread: &[&ResponseMsg], pairs: usize) {
        self.post_count += 1;
        let humans: Vec<_> = thread.iter().filter(|r| r.author_role == AuthorRole::Human).collect();
        if humans.is_empty() {
            self.noresp += 1;
        }
        self.resp.push(humans.len() as f64);
        let members: BTreeSet<_> = humans.iter().map(|r| &r.author_id).filter(|a| **a != post.author_id).collect();
        self.members.push(members.len() as f64);
        let poster: Vec<_> = thread.iter().filter(|r| r.author_role == AuthorRole::Poster).collect();
        self.poster_comm.push(poster.len() as f64);

        let replies: Vec<_> = thread.iter().filter(|r| is_reply(r)).collect();
        if let Some(first) = replies.first() {
            self.first_resp.push(minutes(first.created_at - post.created_at));
        }
        for (k, w) in replies.windows(2).take(pairs).enumerate() {
            self.gaps[k].push(minutes(w[1].created_at - w[0].created_at));
        }
        for (i, r) in replies.iter().enumerate() {
            let next = replies.get(i + 1).map(|n| n.created_at);
            let answered = poster.iter().any(|p| p.created_at > r.created_at && next.is_none_or(|n| p.created_at < n));
            self.replies += 1;
            self.answered_replies += answered as usize;
            if i == 0 {
                self.replied_posts += 1;
                self.answered_first += answered as usize;
            }
        }

        if let Some(o) = post.valence {
            self.original.push(o);
        }
        let updated = replies.first().and_then(|f| poster.iter().find(|p| p.created_at > f.created_at)).and_then(|p| p.valence);
        if let Some(u) = updated {
            self.updated.push(u);
            if let Some(o) = post.valence {
                self.changes.push(valence_change(o, u));
            }
        }
    }

    fn metrics(&self) -> ArmMetrics {
        let gap = |k: usize| {
            let g = &self.gaps[k];
            GapStat { pair: k + 1, n: g.len(), mean_min: MeanSd::of(g).mean }
        };
        let adj: Vec<GapStat> = (0..self.gaps.len()).map(gap).collect();
        let first_second_gap = adj.first().cloned().unwrap_or(GapStat { pair: 1, n: 0, mean_min: None });
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let raise_n = self.changes.iter().filter(|c| **c == ValenceChange::Raise).count();
        let drop_n = self.changes.iter().filter(|c| **c == ValenceChange::Drop).count();
        let n_changes = self.changes.len();
        ArmMetrics {
            post_count: self.post_count,
            post_noresp_n: self.noresp,
            post_1resp_time: Timing {
                n: self.first_resp.len(),
                median_min: median(&mut self.first_resp.clone()),
                mean_min: MeanSd::of(&self.first_resp).mean,
            },
            first_second_gap,
            adj_comm_time: adj,
            poster_comm_n: MeanSd::of(&self.poster_comm),
            post_resp_n: MeanSd::of(&self.resp),
            post_member_n: MeanSd::of(&self.members),
            poster_reply_rate_on_first_reply: ratio(self.answered_first, self.replied_posts),
            poster_reply_rate_on_replies: ratio(self.answered_replies, self.replies),
            valence: ValenceMetrics {
                original: distribution(&self.original),
                updated: distribution(&self.updated),
                change: (n_changes > 0).then(|| ChangeFractions {
                    n: n_changes,
                    raise: raise_n as f64 / n_changes as f64,
                    drop: drop_n as f64 / n_changes as f64,
                    no_change: (n_changes - raise_n - drop_n) as f64 / n_changes as f64,
                }),
                raise_n,
                drop_n,
            },
        }
    }
}

fn distribution(labels: &[ValenceLabel]) -> Option<ValenceDistribution> {
    let n = labels.len();
    let frac = |l: ValenceLabel| labels.iter().filter(|x| **x == l).count() as f64 / n as f64;
    (n > 0).then(|| ValenceDistribution {
        n,
        negative: frac(ValenceLabel::Negative),
        neutral: frac(ValenceLabel::Neutral),
        positive: frac(ValenceLabel::Positive),
    })
}

/// Computes the measurement battery for both arms from an event log.
pub fn compute_metrics(entries: &[LogEntry], config: &MetricsConfig) -> Result<MetricsReport, EvalError> {
    let mut posts: BTreeMap<&str, &Post> = BTreeMap::new();
    let mut records: Vec<&ExperimentRecord> = Vec::new();
    let mut observed: BTreeMap<&str, Vec<&ResponseMsg>> = BTreeMap::new();
    let mut seen_ids: BTreeSet<&str> = BTreeSet::new();
    let mut closed: BTreeSet<&str> = BTreeSet::new();
    for e in entries {
        match &e.event {
            Event::PostSeen { post } => {
                posts.insert(&post.id, post);
            }
            Event::Enrolled { record } => records.push(record),
            Event::Observed { response } if seen_ids.insert(&response.id) => {
                observed.entry(&response.post_id).or_default().push(response);
            }
            Event::WindowClosed { post_id } => {
                closed.insert(post_id);
            }
            _ => {}
        }
    }
    if config.require_closed {
        let open: Vec<String> = records.iter().filter(|r| !closed.contains(r.post_id.as_str())).map(|r| r.post_id.clone()).collect();
        if !open.is_empty() {
            return Err(EvalError::IncompleteLog(open));
        }
    }

    let mut arms = [Samples::default(), Samples::default()];
    for a in &mut arms {
        a.gaps = vec![Vec::new(); config.adjacent_pairs];
    }
    for r in records {
        let Some(post) = posts.get(r.post_id.as_str()) else {
            continue;
        };
        let mut thread: Vec<&ResponseMsg> = observed
            .get(r.post_id.as_str())
            .map(|v| v.iter().copied().filter(|x| x.created_at <= r.window_end).collect())
            .unwrap_or_default();
        thread.sort_by_key(|x| x.created_at);
        let i = match r.arm {
            Arm::Experiment => 0,
            Arm::Control => 1,
        };
        arms[i].add(post, &thread, config.adjacent_pairs);
    }
    let [exp, ctl] = &arms;
    let v = config.t_variant;
    let t = |a: &[f64], b: &[f64]| t_test_ind(a, b, v).ok();
    let count = |n: usize| n as u64;
    let tests = ArmTests {
        noresp_chi2: chi2_2x2(
            count(ctl.noresp),
            count(ctl.post_count - ctl.noresp),
            count(exp.noresp),
            count(exp.post_count - exp.noresp),
            false,
        )
        .ok(),
        first_response_t: t(&exp.first_resp, &ctl.first_resp),
        first_second_gap_t: exp.gaps.first().zip(ctl.gaps.first()).and_then(|(a, b)| t(a, b)),
        poster_comm_t: t(&exp.poster_comm, &ctl.poster_comm),
        post_resp_t: t(&exp.resp, &ctl.resp),
        post_member_t: t(&exp.members, &ctl.members),
        raise_chi2: change_chi2(exp, ctl, ValenceChange::Raise),
        drop_chi2: change_chi2(exp, ctl, ValenceChange::Drop),
    };
    Ok(MetricsReport { experiment: exp.metrics(), control: ctl.metrics(), tests })
}

fn change_chi2(exp: &Samples, ctl: &Samples, which: ValenceChange) -> Option<TestResult> {
    let split = |s: &Samples| {
        let k = s.changes.iter().filter(|c| **c == which).count() as u64;
        (k, s.changes.len() as u64 - k)
    };
    let (a, b) = split(ctl);
    let (c, d) = split(exp);
    chi2_2x2(a, b, c, d, false).ok()
}
