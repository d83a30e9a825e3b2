//! Target-independent operations behind the bindings.

use serde_json::{json, Value};
use supportbot_core::community::SimScenario;
use supportbot_core::corpus::{PairExample, DAY_MS};
use supportbot_core::evaluation::{chi2_2x2, compute_metrics, t_from_summary, MetricsConfig, Summary, TVariant};
use supportbot_core::generator::{build_bm25_index, DEFAULT_B, DEFAULT_K1};
use supportbot_core::pipeline::{run_simulated, sim_classifier, warmup_pairs, EventLog, PipelineConfig, ResponderKind};
use supportbot_core::text::Tokenizer;

/// Longest simulated intake period a page may request.
pub const MAX_DAYS: f64 = 3.0;
/// Length of the ranked list returned with a retrieval.
pub const RANKED: usize = 5;

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn sample_pairs(seed: u64, limit: usize) -> Result<String, String> {
    let scenario = SimScenario { seed, ..Default::default() };
    let pairs = warmup_pairs(&scenario).map_err(|e| e.to_string())?;
    Ok(pairs.iter().take(limit).map(|p| format!("{}\t{}\n", one_line(&p.post_text), one_line(&p.response_text))).collect())
}

/// Parses `post\treply` lines; blank lines are skipped.
pub fn parse_pairs(tsv: &str) -> Result<Vec<PairExample>, String> {
    tsv.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split_once('\t') {
            Some((post, reply)) if !post.trim().is_empty() && !reply.trim().is_empty() => {
                Ok(PairExample { post_text: post.trim().into(), response_text: reply.trim().into() })
            }
            _ => Err(format!("line {}: expected post<TAB>reply", i + 1)),
        })
        .collect()
}

pub fn retrieve(pairs_tsv: &str, query: &str) -> Result<Value, String> {
    let pairs = parse_pairs(pairs_tsv)?;
    let tokenizer = Tokenizer::default();
    let index = build_bm25_index(&pairs, tokenizer, DEFAULT_K1, DEFAULT_B).map_err(|e| e.to_string())?;
    let hit = index.retrieve(query).map_err(|e| e.to_string())?;
    let scores = index.scores(&tokenizer.tokenize(query));
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let ranked: Vec<Value> =
        order.into_iter().take(RANKED).map(|i| json!({ "doc": i, "post": pairs[i].post_text, "score": scores[i] })).collect();
    Ok(json!({
        "doc": hit.doc,
        "post": pairs[hit.doc].post_text,
        "response": hit.response,
        "score": hit.score,
        "zero_score": hit.zero_score,
        "ranked": ranked,
    }))
}

pub fn chi2(a: u64, b: u64, c: u64, d: u64, yates: bool) -> Result<Value, String> {
    let r = chi2_2x2(a, b, c, d, yates).map_err(|e| e.to_string())?;
    Ok(json!({
        "statistic": r.statistic,
        "df": r.df,
        "p": r.p,
        "row_rates": [a as f64 / (a + b) as f64, c as f64 / (c + d) as f64],
    }))
}

/// `x` and `y` hold mean and standard deviation.
pub fn t_summary(x: [f64; 2], nx: u64, y: [f64; 2], ny: u64, welch: bool) -> Result<Value, String> {
    let variant = if welch { TVariant::Welch } else { TVariant::Pooled };
    let a = Summary { mean: x[0], sd: x[1], n: nx };
    let b = Summary { mean: y[0], sd: y[1], n: ny };
    let r = t_from_summary(a, b, variant).map_err(|e| e.to_string())?;
    Ok(json!({ "statistic": r.statistic, "df": r.df, "p": r.p }))
}

#[derive(Clone, Copy, Debug)]
pub struct ExperimentParams {
    pub seed: u64,
    pub days: f64,
    pub arm_probability: f64,
    /// Multiplier on the follow-up reply rate after a bot reply.
    pub followup_boost: f64,
}

/// Simulated community with the pipeline attached, run until every window
/// has closed. Uses retrieval replies and keyword classification.
pub fn experiment(p: &ExperimentParams) -> Result<Value, String> {
    if !(p.days > 0.0 && p.days <= MAX_DAYS) {
        return Err(format!("days must lie in (0, {MAX_DAYS}]"));
    }
    let scenario = SimScenario {
        seed: p.seed,
        duration_ms: (p.days * DAY_MS as f64).round() as i64,
        followup_hazard_boost: p.followup_boost,
        ..Default::default()
    };
    scenario.validate().map_err(|e| e.to_string())?;
    let config = PipelineConfig { arm_probability: p.arm_probability, responder: ResponderKind::Bm25, seed: p.seed, ..Default::default() };
    let index = build_bm25_index(&warmup_pairs(&scenario).map_err(|e| e.to_string())?, Tokenizer::default(), DEFAULT_K1, DEFAULT_B)
        .map_err(|e| e.to_string())?;
    let out = run_simulated(&scenario, &config, &sim_classifier(), &index, EventLog::in_memory(), None).map_err(|e| e.to_string())?;
    let report = compute_metrics(out.pipeline.entries(), &MetricsConfig::default()).map_err(|e| e.to_string())?;
    let state = out.pipeline.state();
    Ok(json!({
        "posts_seen": state.posts_seen(),
        "enrolled": state.records().count(),
        "published": state.records().filter(|r| r.bot_response_id.is_some()).count(),
        "events": out.pipeline.entries().len(),
        "report": report,
    }))
}
