//! Browser bindings. Every operation returns a JSON string; errors surface
//! as JavaScript exceptions carrying the message. Integer arguments are
//! `u32` so they arrive as plain JavaScript numbers.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js(result: Result<serde_json::Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// Tab-separated `post\treply` lines drawn from a simulated community.
#[wasm_bindgen(js_name = samplePairs)]
pub fn sample_pairs(seed: u32, limit: usize) -> Result<String, JsError> {
    ops::sample_pairs(seed.into(), limit).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn retrieve(pairs_tsv: &str, query: &str) -> Result<String, JsError> {
    js(ops::retrieve(pairs_tsv, query))
}

#[wasm_bindgen]
pub fn chi2(a: u32, b: u32, c: u32, d: u32, yates: bool) -> Result<String, JsError> {
    js(ops::chi2(a.into(), b.into(), c.into(), d.into(), yates))
}

#[wasm_bindgen(js_name = tSummary)]
#[allow(clippy::too_many_arguments)]
pub fn t_summary(mean1: f64, sd1: f64, n1: u32, mean2: f64, sd2: f64, n2: u32, welch: bool) -> Result<String, JsError> {
    js(ops::t_summary([mean1, sd1], n1.into(), [mean2, sd2], n2.into(), welch))
}

#[wasm_bindgen]
pub fn experiment(seed: u32, days: f64, arm_probability: f64, followup_boost: f64) -> Result<String, JsError> {
    js(ops::experiment(&ops::ExperimentParams { seed: seed.into(), days, arm_probability, followup_boost }))
}
