//! Scripted pipeline runs and the invariants every run must satisfy.

use super::script::{post, response, FixedResponder, ScriptPort};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use std::collections::{BTreeMap, BTreeSet};
use supportbot_core::corpus::{AuthorRole, Millis, MINUTE_MS};
use supportbot_core::pipeline::{
    Arm, Event, EventLog, KeywordClassifier, Pipeline, PipelineConfig, PipelineError, ResolveAction, ReviewState,
};
use supportbot_core::text::Tokenizer;

const T0: Millis = 1_000_000_000_000;

#[derive(Clone, Debug)]
pub struct Script {
    posts: Vec<(Millis, bool)>,
    /// (post index, delay, is_poster)
    responses: Vec<(usize, Millis, bool)>,
    /// Per review in creation order: operator delay and action.
    actions: Vec<Option<(Millis, bool)>>,
    seed: u64,
}

pub fn script() -> impl Strategy<Value = Script> {
    (1usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec((0..40 * MINUTE_MS, any::<bool>()), n),
            prop::collection::vec((0..n, 1..25 * MINUTE_MS, prop::bool::weighted(0.3)), 0..10),
            prop::collection::vec(prop::option::weighted(0.6, (0..15_000i64, any::<bool>())), n),
            any::<u64>(),
        )
            .prop_map(|(posts, responses, actions, seed)| Script { posts, responses, actions, seed })
    })
}

pub struct Outcome {
    pipeline: Pipeline,
    port: ScriptPort,
    config: PipelineConfig,
    /// review id -> time of a successful operator resolution
    resolved_at: BTreeMap<String, Millis>,
}

pub fn execute(s: &Script) -> Outcome {
    let mut port = ScriptPort::default();
    for (i, (at, info)) in s.posts.iter().enumerate() {
        let text = if *info { "why is she coughing" } else { "so tired tonight" };
        port.posts.push(post(&format!("p{i}"), &format!("u{i}"), text, T0 + at));
    }
    for (k, (i, delay, is_poster)) in s.responses.iter().enumerate() {
        let (role, author) = if *is_poster { (AuthorRole::Poster, format!("u{i}")) } else { (AuthorRole::Human, format!("h{k}")) };
        port.responses.push(response(&format!("r{k}"), &format!("p{i}"), &author, role, T0 + s.posts[*i].0 + delay));
    }
    let config = PipelineConfig { seed: s.seed, track_window_ms: 60 * MINUTE_MS, track_interval_ms: 10 * MINUTE_MS, ..Default::default() };
    let classifier = KeywordClassifier::new(&["why"], Tokenizer::default());
    let responder = FixedResponder("you are not alone");
    let mut p = Pipeline::new(config.clone(), EventLog::in_memory()).unwrap();
    let mut scheduled: BTreeMap<Millis, Vec<(String, bool)>> = BTreeMap::new();
    let mut resolved_at = BTreeMap::new();
    let mut reviews_seen = 0;
    let end = T0 + 200 * MINUTE_MS;
    let mut now = T0;
    while now <= end {
        port.clock = now;
        for (id, replace) in scheduled.remove(&now).unwrap_or_default() {
            let action = if replace { ResolveAction::Replace("stay strong!".into()) } else { ResolveAction::Approve };
            match p.hitl_resolve(&id, action, "op", now) {
                Ok(_) => {
                    resolved_at.insert(id, now);
                }
                Err(PipelineError::ReviewClosed(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
        p.tick(&mut port, &classifier, &responder, now).unwrap();
        let reviews: Vec<_> = p.state().reviews().map(|r| (r.review_id.clone(), r.created_at)).collect();
        for (id, created) in reviews.into_iter().skip(reviews_seen) {
            if let Some(Some((delay, replace))) = s.actions.get(reviews_seen) {
                scheduled.entry(created + delay.max(&1)).or_default().push((id, *replace));
            }
            reviews_seen += 1;
        }
        let grid = T0 + ((now - T0) / MINUTE_MS + 1) * MINUTE_MS;
        let next_action = scheduled.keys().next().copied();
        now = [Some(grid), p.next_wakeup(now), next_action].into_iter().flatten().min().unwrap();
    }
    Outcome { pipeline: p, port, config, resolved_at }
}

/// Overlooked and exhaustive enrollment, at most one bot reply and none in
/// control, publish exactly once after release, and replay equality.
pub fn check_invariants(s: &Script) -> Result<(), TestCaseError> {
    let Outcome { pipeline: p, port, config, resolved_at } = execute(s);
    let state = p.state();

    // overlooked rule and exhaustive, exclusive enrollment
    let mut expect_enrolled = BTreeSet::new();
    for post in &port.posts {
        let due = post.created_at + config.overlooked_threshold_ms;
        let answered = port.responses.iter().any(|r| r.post_id == post.id && r.author_role == AuthorRole::Human && r.created_at <= due);
        let informational = post.text.contains("why");
        if !answered && !informational {
            expect_enrolled.insert(post.id.clone());
        }
        prop_assert!(!(state.record(&post.id).is_some() && state.excluded().contains_key(&post.id)));
    }
    let enrolled: BTreeSet<String> = state.records().map(|r| r.post_id.clone()).collect();
    prop_assert_eq!(&enrolled, &expect_enrolled);

    // at most one bot reply, never in the control arm
    let mut bot_calls: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, post_id, _) in &port.publish_calls {
        *bot_calls.entry(post_id.as_str()).or_default() += 1;
    }
    for rec in state.records() {
        let calls = bot_calls.get(rec.post_id.as_str()).copied().unwrap_or(0);
        prop_assert!(calls <= 1);
        if rec.arm == Arm::Control {
            prop_assert_eq!(calls, 0);
            prop_assert!(rec.bot_response_id.is_none());
        }
    }
    prop_assert!(bot_calls.keys().all(|p| enrolled.contains(*p)));

    // each review is published exactly once, not before it is released
    let mut published: BTreeMap<&str, Vec<Millis>> = BTreeMap::new();
    for e in p.entries() {
        if let Event::Published { review_id, .. } = &e.event {
            published.entry(review_id.as_str()).or_default().push(e.timestamp);
        }
    }
    for review in state.reviews() {
        let times = published.get(review.review_id.as_str()).cloned().unwrap_or_default();
        prop_assert_eq!(times.len(), 1, "review {}", &review.review_id);
        prop_assert!(review.state != ReviewState::Pending);
        let release = resolved_at.get(&review.review_id).copied().unwrap_or(review.deadline).min(review.deadline);
        prop_assert!(times[0] >= release);
        let response = state.published(&review.review_id).unwrap();
        prop_assert_eq!(Some(&response.text), review.final_text.as_ref());
        prop_assert_eq!(response.author_role, AuthorRole::Bot);
        if review.state == ReviewState::Replaced {
            prop_assert_eq!(response.text.as_str(), "stay strong!");
            prop_assert!(review.operator_id.is_some());
        }
    }
    prop_assert_eq!(port.publish_calls.len(), state.reviews().count());

    // replay equality
    prop_assert_eq!(&Pipeline::replay(&config, p.entries()), state);
    Ok(())
}
