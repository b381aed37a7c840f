//! Browser bindings for three interactive operations: parsing a model
//! response, scoring pasted label pairs, and drawing a rater learning curve
//! on synthetic data. Each returns a JSON document for the page to render.

use annorater_core::metrics::evaluate;
use annorater_core::parse::{normalize, parse_response, ParseOutcome};
use annorater_core::rater::{gen_synthetic, proportion_sweep, ClassifierSpec, DEFAULT_GAP, DEFAULT_PROPORTIONS};
use annorater_core::report::ConfusionSection;
use annorater_core::{EvaluationPair, EvaluationSet, Label, TaskConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bounds that keep the synthetic sweep responsive in a browser tab.
pub const MAX_SWEEP_ITEMS: usize = 2000;
pub const MAX_SWEEP_REPEATS: usize = 50;

fn labels_from_csv(labels_csv: &str) -> Result<Vec<Label>, String> {
    let labels: Vec<Label> = labels_csv
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Label::new(s.trim()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if labels.len() < 2 {
        return Err("enter at least two comma-separated labels".into());
    }
    Ok(labels)
}

#[derive(Serialize)]
struct ParseView {
    normalized: String,
    #[serde(flatten)]
    outcome: ParseOutcome,
}

pub fn parse_json(response: &str, labels_csv: &str) -> Result<String, String> {
    let labels = labels_from_csv(labels_csv)?;
    let view = ParseView {
        normalized: normalize(response),
        outcome: parse_response(response, &labels),
    };
    Ok(serde_json::to_string(&view).expect("views serialize"))
}

#[derive(Serialize)]
struct MetricsView {
    metrics: annorater_core::metrics::DatasetMetrics,
    confusion: ConfusionSection,
}

/// `pairs_text` holds one `human,model` pair per line; blank lines are
/// skipped and a model label outside the label set counts as unparsable.
pub fn metrics_json(labels_csv: &str, pairs_text: &str) -> Result<String, String> {
    let labels = labels_from_csv(labels_csv)?;
    let names: Vec<&str> = labels.iter().map(Label::raw).collect();
    let task = TaskConfig::with_labels("demo", "demo", &names, "demo").map_err(|e| e.to_string())?;
    let mut set = EvaluationSet {
        task: task.clone(),
        pairs: Vec::new(),
        n_unparsable: 0,
        n_api_failed: 0,
        n_missing: 0,
    };
    for (n, line) in pairs_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (human, model) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected `human,model`", n + 1))?;
        let human = task
            .find_label(human.trim())
            .ok_or_else(|| format!("line {}: {:?} is not a declared label", n + 1, human.trim()))?;
        match parse_response(model, &task.labels) {
            ParseOutcome::Parsed { label } => set.pairs.push(EvaluationPair {
                item_id: format!("line-{}", n + 1),
                human_label: human.clone(),
                model_label: label,
            }),
            ParseOutcome::Unparsable { .. } => set.n_unparsable += 1,
        }
    }
    let (metrics, cm) = evaluate(&set, true).map_err(|e| e.to_string())?;
    let view = MetricsView {
        metrics,
        confusion: ConfusionSection::from(&cm),
    };
    Ok(serde_json::to_string(&view).expect("views serialize"))
}

/// Learning curve of a logistic-regression rater on two Gaussian clusters.
pub fn sweep_json(n: usize, margin: f64, noise_rate: f64, repeats: usize, seed: u64) -> Result<String, String> {
    if n > MAX_SWEEP_ITEMS || repeats > MAX_SWEEP_REPEATS {
        return Err(format!("at most {MAX_SWEEP_ITEMS} items and {MAX_SWEEP_REPEATS} repeats"));
    }
    let examples = gen_synthetic(n, 8, margin, noise_rate, seed).map_err(|e| e.to_string())?;
    let sweep = proportion_sweep(
        &examples,
        &ClassifierSpec::logistic(),
        &DEFAULT_PROPORTIONS,
        repeats,
        0.8,
        DEFAULT_GAP,
        seed,
    )
    .map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&sweep).expect("sweeps serialize"))
}

#[wasm_bindgen]
pub fn parse_demo(response: &str, labels_csv: &str) -> Result<String, JsError> {
    parse_json(response, labels_csv).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn metrics_demo(labels_csv: &str, pairs_text: &str) -> Result<String, JsError> {
    metrics_json(labels_csv, pairs_text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep_demo(n: usize, margin: f64, noise_rate: f64, repeats: usize, seed: u32) -> Result<String, JsError> {
    sweep_json(n, margin, noise_rate, repeats, u64::from(seed)).map_err(|e| JsError::new(&e))
}
