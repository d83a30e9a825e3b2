use proptest::prelude::*;
use supportbot_core::corpus::{AuthorRole, Millis, Post, ResponseMsg, TopCategory, MINUTE_MS};
use supportbot_core::evaluation::{compute_metrics, EvalError, MetricsConfig, MetricsReport, ValenceLabel};
use supportbot_core::pipeline::{Arm, Event, ExperimentRecord, LogEntry};

const T0: Millis = 1_000_000_000_000;
const WINDOW: Millis = 7 * 24 * 60 * MINUTE_MS;

fn post(id: &str, at: Millis, valence: Option<ValenceLabel>) -> Post {
    Post {
        id: id.into(),
        author_id: format!("a-{id}"),
        text: "t".into(),
        created_at: at,
        has_image: false,
        forum_id: String::new(),
        category: None,
        valence,
    }
}

fn resp(id: &str, post_id: &str, author: &str, role: AuthorRole, at: Millis, valence: Option<ValenceLabel>) -> ResponseMsg {
    ResponseMsg {
        id: id.into(),
        post_id: post_id.into(),
        author_id: author.into(),
        author_role: role,
        text: "r".into(),
        created_at: at,
        valence,
    }
}

fn entry(event: Event) -> LogEntry {
    LogEntry { timestamp: 0, event }
}

fn enroll(p: &Post, arm: Arm) -> Vec<LogEntry> {
    vec![
        entry(Event::PostSeen { post: p.clone() }),
        entry(Event::Enrolled {
            record: ExperimentRecord {
                post_id: p.id.clone(),
                arm,
                enrolled_at: p.created_at,
                category: TopCategory::NonInformational,
                bot_response_id: None,
                window_end: p.created_at + WINDOW,
                skip_reason: None,
            },
        }),
    ]
}

fn observe(r: ResponseMsg) -> LogEntry {
    entry(Event::Observed { response: r })
}

fn close(id: &str) -> LogEntry {
    entry(Event::WindowClosed { post_id: id.into() })
}

#[test]
fn hand_traced_log() {
    let mut log = Vec::new();
    for (i, id) in ["p1", "p2", "p3"].iter().enumerate() {
        log.extend(enroll(&post(id, T0 + i as Millis, None), Arm::Control));
    }
    log.push(observe(resp("r1", "p1", "x", AuthorRole::Human, T0 + 5 * MINUTE_MS, None)));
    log.push(observe(resp("r2", "p1", "y", AuthorRole::Human, T0 + 20 * MINUTE_MS, None)));
    log.extend(["p1", "p2", "p3"].map(close));
    let m = compute_metrics(&log, &MetricsConfig::default()).unwrap();
    let c = &m.control;
    assert_eq!(c.post_count, 3);
    assert_eq!(c.post_noresp_n, 2);
    assert_eq!(c.post_1resp_time.mean_min, Some(5.0));
    assert_eq!(c.post_1resp_time.median_min, Some(5.0));
    assert_eq!(c.first_second_gap.mean_min, Some(15.0));
    assert_eq!(c.first_second_gap.n, 1);
    assert_eq!(c.adj_comm_time.len(), 5);
    assert_eq!(c.adj_comm_time[1].n, 0);
    assert_eq!(c.post_member_n.mean, Some(2.0 / 3.0));
    assert_eq!(m.experiment.post_count, 0);
    assert!(m.tests.noresp_chi2.is_none());
}

#[test]
fn bot_and_poster_do_not_count_as_responses() {
    let p = post("p1", T0, Some(ValenceLabel::Negative));
    let mut log = enroll(&p, Arm::Experiment);
    log.push(observe(resp("b", "p1", "bot", AuthorRole::Bot, T0 + 10 * MINUTE_MS, None)));
    log.push(observe(resp("c", "p1", "a-p1", AuthorRole::Poster, T0 + 30 * MINUTE_MS, Some(ValenceLabel::Positive))));
    log.push(close("p1"));
    let m = compute_metrics(&log, &MetricsConfig::default()).unwrap();
    let e = &m.experiment;
    assert_eq!(e.post_noresp_n, e.post_count);
    assert_eq!(e.post_resp_n.mean, Some(0.0));
    assert_eq!(e.post_1resp_time.mean_min, Some(10.0));
    assert_eq!(e.poster_comm_n.mean, Some(1.0));
    assert_eq!(e.poster_reply_rate_on_first_reply, Some(1.0));
    let change = e.valence.change.as_ref().unwrap();
    assert_eq!((change.raise, change.n), (1.0, 1));
}

#[test]
fn unclosed_windows_are_reported() {
    let mut log = enroll(&post("p1", T0, None), Arm::Control);
    log.extend(enroll(&post("p2", T0, None), Arm::Experiment));
    log.push(close("p1"));
    assert_eq!(compute_metrics(&log, &MetricsConfig::default()), Err(EvalError::IncompleteLog(vec!["p2".into()])));
    let partial = MetricsConfig { require_closed: false, ..Default::default() };
    assert_eq!(compute_metrics(&log, &partial).unwrap().experiment.post_count, 1);
}

// Brute-force recomputation from raw events.

struct Oracle {
    count: usize,
    noresp: usize,
    first: Vec<f64>,
    gaps: [Vec<f64>; 5],
    poster: Vec<f64>,
    resp: Vec<f64>,
    members: Vec<f64>,
    rate_first: (usize, usize),
    rate_all: (usize, usize),
    raise: usize,
    drop: usize,
    changes: usize,
}

fn oracle(log: &[LogEntry], arm: Arm) -> Oracle {
    let mut o = Oracle {
        count: 0,
        noresp: 0,
        first: vec![],
        gaps: Default::default(),
        poster: vec![],
        resp: vec![],
        members: vec![],
        rate_first: (0, 0),
        rate_all: (0, 0),
        raise: 0,
        drop: 0,
        changes: 0,
    };
    for e in log {
        let Event::Enrolled { record } = &e.event else { continue };
        if record.arm != arm {
            continue;
        }
        let post = log
            .iter()
            .find_map(|e| match &e.event {
                Event::PostSeen { post } if post.id == record.post_id => Some(post.clone()),
                _ => None,
            })
            .unwrap();
        let mut thread: Vec<ResponseMsg> = Vec::new();
        for e in log {
            if let Event::Observed { response } = &e.event {
                if response.post_id == post.id && response.created_at <= record.window_end && !thread.iter().any(|r| r.id == response.id) {
                    thread.push(response.clone());
                }
            }
        }
        thread.sort_by_key(|r| r.created_at);
        o.count += 1;
        let mut humans = 0;
        let mut authors: Vec<&str> = vec![];
        let mut poster_times = vec![];
        let mut reply_times = vec![];
        for r in &thread {
            match r.author_role {
                AuthorRole::Human => {
                    humans += 1;
                    if r.author_id != post.author_id && !authors.contains(&r.author_id.as_str()) {
                        authors.push(&r.author_id);
                    }
                    reply_times.push(r.created_at);
                }
                AuthorRole::Poster => poster_times.push(r.created_at),
                _ => reply_times.push(r.created_at),
            }
        }
        if humans == 0 {
            o.noresp += 1;
        }
        o.resp.push(humans as f64);
        o.members.push(authors.len() as f64);
        o.poster.push(poster_times.len() as f64);
        if let Some(f) = reply_times.first() {
            o.first.push((f - post.created_at) as f64 / 60_000.0);
        }
        for k in 0..5 {
            if reply_times.len() > k + 1 {
                o.gaps[k].push((reply_times[k + 1] - reply_times[k]) as f64 / 60_000.0);
            }
        }
        for (i, t) in reply_times.iter().enumerate() {
            let next = reply_times.get(i + 1).copied().unwrap_or(Millis::MAX);
            let hit = poster_times.iter().any(|p| p > t && *p < next) as usize;
            o.rate_all.0 += hit;
            o.rate_all.1 += 1;
            if i == 0 {
                o.rate_first.0 += hit;
                o.rate_first.1 += 1;
            }
        }
        if let (Some(orig), Some(&f)) = (post.valence, reply_times.first()) {
            let upd = thread.iter().find(|r| r.author_role == AuthorRole::Poster && r.created_at > f).and_then(|r| r.valence);
            if let Some(u) = upd {
                o.changes += 1;
                if u.score() > orig.score() {
                    o.raise += 1;
                } else if u.score() < orig.score() {
                    o.drop += 1;
                }
            }
        }
    }
    o
}

fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

fn sd(x: &[f64]) -> Option<f64> {
    let m = mean(x)?;
    (x.len() > 1).then(|| (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt())
}

fn med(x: &[f64]) -> Option<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    (n > 0).then(|| if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * (1.0 + y.abs()),
        _ => false,
    }
}

fn check(report: &MetricsReport, log: &[LogEntry]) -> Result<(), TestCaseError> {
    for (arm, m) in [(Arm::Experiment, &report.experiment), (Arm::Control, &report.control)] {
        let o = oracle(log, arm);
        prop_assert_eq!(m.post_count, o.count);
        prop_assert_eq!(m.post_noresp_n, o.noresp);
        prop_assert!(close_opt(m.post_1resp_time.mean_min, mean(&o.first)));
        prop_assert!(close_opt(m.post_1resp_time.median_min, med(&o.first)));
        for k in 0..5 {
            prop_assert_eq!(m.adj_comm_time[k].n, o.gaps[k].len());
            prop_assert!(close_opt(m.adj_comm_time[k].mean_min, mean(&o.gaps[k])));
        }
        prop_assert!(close_opt(m.first_second_gap.mean_min, mean(&o.gaps[0])));
        for (got, want) in [(&m.poster_comm_n, &o.poster), (&m.post_resp_n, &o.resp), (&m.post_member_n, &o.members)] {
            prop_assert!(close_opt(got.mean, mean(want)));
            prop_assert!(close_opt(got.sd, sd(want)));
        }
        let rate = |(a, b): (usize, usize)| (b > 0).then(|| a as f64 / b as f64);
        prop_assert!(close_opt(m.poster_reply_rate_on_first_reply, rate(o.rate_first)));
        prop_assert!(close_opt(m.poster_reply_rate_on_replies, rate(o.rate_all)));
        prop_assert_eq!((m.valence.raise_n, m.valence.drop_n), (o.raise, o.drop));
        prop_assert_eq!(m.valence.change.as_ref().map_or(0, |c| c.n), o.changes);
        for d in [&m.valence.original, &m.valence.updated].into_iter().flatten() {
            prop_assert!((d.negative + d.neutral + d.positive - 1.0).abs() < 1e-9);
        }
    }
    Ok(())
}

fn role() -> impl Strategy<Value = AuthorRole> {
    prop_oneof![4 => Just(AuthorRole::Human), 2 => Just(AuthorRole::Poster), 1 => Just(AuthorRole::Bot)]
}

fn valence() -> impl Strategy<Value = Option<ValenceLabel>> {
    prop::option::of(prop::sample::select(ValenceLabel::ALL.to_vec()))
}

fn random_log() -> impl Strategy<Value = Vec<LogEntry>> {
    let posts = prop::collection::vec((any::<bool>(), valence()), 1..8);
    let responses = prop::collection::vec((0usize..8, role(), 0usize..4, 1i64..(8 * 24 * 60), valence(), any::<bool>()), 0..30);
    (posts, responses).prop_map(|(posts, responses)| {
        let mut log = Vec::new();
        for (i, (exp, v)) in posts.iter().enumerate() {
            let arm = if *exp { Arm::Experiment } else { Arm::Control };
            log.extend(enroll(&post(&format!("p{i}"), T0 + i as Millis, *v), arm));
        }
        for (k, (pi, role, author, minute, v, dup)) in responses.into_iter().enumerate() {
            let pi = pi % posts.len();
            let pid = format!("p{pi}");
            let author = if role == AuthorRole::Poster { format!("a-{pid}") } else { format!("m{author}") };
            // distinct timestamps keep the reply order unambiguous
            let at = T0 + pi as Millis + minute * MINUTE_MS + k as Millis;
            let r = resp(&format!("r{k}"), &pid, &author, role, at, v);
            log.push(observe(r.clone()));
            if dup {
                log.push(observe(r));
            }
        }
        for i in 0..posts.len() {
            log.push(close(&format!("p{i}")));
        }
        log
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn metrics_match_brute_force(log in random_log()) {
        let report = compute_metrics(&log, &MetricsConfig::default()).unwrap();
        check(&report, &log)?;
    }
}
