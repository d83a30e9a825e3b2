//! Virtual-clock driver that runs the pipeline against the simulator.
//!
//! Ticks happen on a poll grid anchored at the scenario start while posts
//! can still arrive, and at every clock-driven wakeup the pipeline reports
//! (overlooked thresholds, review deadlines, sweeps, window ends). Tick times
//! are therefore a function of the log, which makes a resumed run emit the
//! same events as an uninterrupted one.

use super::engine::Pipeline;
use super::log::{Event, EventLog, LogEntry};
use super::{KeywordClassifier, PipelineConfig, PipelineError, PostClassifier};
use crate::community::{sim_informational_words, CommunityPort, SimPort, SimScenario, SimState};
use crate::corpus::{first_reply_pairs, AuthorRole, Corpus, Millis, PairExample, DAY_MS};
use crate::generator::Responder;
use crate::text::Tokenizer;

pub struct SimRunOutcome {
    pub pipeline: Pipeline,
    pub port: SimPort,
    /// False when the run stopped at `stop_at` before every window closed.
    pub finished: bool,
}

/// Recreates the simulator a log was recorded against by replaying its bot
/// publications at their original times.
pub fn rebuild_sim_port(scenario: &SimScenario, entries: &[LogEntry]) -> Result<SimPort, PipelineError> {
    let mut port = SimPort::new(SimState::new(scenario.clone())?);
    for e in entries {
        if let Event::Published { response, .. } = &e.event {
            port.advance(response.created_at)?;
            let again = port.publish(&response.post_id, &response.text, AuthorRole::Bot)?;
            if &again != response {
                return Err(PipelineError::Log(format!(
                    "log does not match the scenario: publication {} replayed as {}",
                    response.id, again.id
                )));
            }
        }
    }
    Ok(port)
}

/// First-reply pairs from one simulated day before the scenario starts,
/// drawn under a different seed.
pub fn warmup_pairs(scenario: &SimScenario) -> Result<Vec<PairExample>, PipelineError> {
    let warmup =
        SimScenario { seed: scenario.seed ^ 0x5eed_5eed, start_ms: scenario.start_ms - DAY_MS, duration_ms: DAY_MS, ..scenario.clone() };
    let mut sim = SimState::new(warmup)?;
    sim.advance(scenario.start_ms)?;
    Ok(first_reply_pairs(&Corpus::new(sim.posts().to_vec(), sim.responses().to_vec())))
}

/// Keyword classifier over the simulator's informational vocabulary.
pub fn sim_classifier() -> KeywordClassifier {
    KeywordClassifier::new(sim_informational_words(), Tokenizer::default())
}

/// Runs (or resumes, if `log` is non-empty) the pipeline over a simulated
/// community until every enrolled window has closed, or until the clock
/// would pass `stop_at`.
pub fn run_simulated(
    scenario: &SimScenario,
    config: &PipelineConfig,
    classifier: &dyn PostClassifier,
    responder: &dyn Responder,
    log: EventLog,
    stop_at: Option<Millis>,
) -> Result<SimRunOutcome, PipelineError> {
    let mut pipeline = Pipeline::new(config.clone(), log)?;
    let mut port = rebuild_sim_port(scenario, pipeline.entries())?;
    let start = scenario.start_ms;
    let intake_end = start + scenario.duration_ms;
    let poll = config.poll_interval_ms;
    let mut now = pipeline.state().clock().map_or(start, |c| c.max(start));
    loop {
        if stop_at.is_some_and(|s| now > s) {
            return Ok(SimRunOutcome { pipeline, port, finished: false });
        }
        port.advance(now)?;
        pipeline.tick(&mut port, classifier, responder, now)?;
        let grid = (now < intake_end).then(|| start + ((now - start) / poll + 1) * poll);
        match grid.into_iter().chain(pipeline.next_wakeup(now)).min() {
            Some(next) => now = next,
            None => break,
        }
    }
    let s = pipeline.state();
    debug_assert!(s.undecided() == 0 && s.open_windows() == 0 && s.unpublished() == 0);
    Ok(SimRunOutcome { pipeline, port, finished: true })
}
