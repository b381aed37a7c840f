//! Agreement metrics between gold labels and model labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EvaluationSet, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("evaluation set has no parsable pairs")]
    EmptyEvaluation,
    #[error("item {item_id}: label {label:?} is not in the task label set")]
    LabelMismatch { item_id: String, label: String },
}

/// Rows are gold labels, columns are model labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    /// Each row divided by its sum; empty rows stay all zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }
}

pub fn confusion_matrix(eval_set: &EvaluationSet) -> Result<ConfusionMatrix, MetricsError> {
    if eval_set.pairs.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let labels = eval_set.task.labels.clone();
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let index = |label: &Label, item_id: &str| {
        eval_set
            .task
            .label_index(label)
            .ok_or_else(|| MetricsError::LabelMismatch {
                item_id: item_id.to_string(),
                label: label.raw().to_string(),
            })
    };
    for pair in &eval_set.pairs {
        let i = index(&pair.human_label, &pair.item_id)?;
        let j = index(&pair.model_label, &pair.item_id)?;
        counts[i][j] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: Label,
    pub support: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Harmonic mean, defined as 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_label_metrics(cm: &ConfusionMatrix) -> Vec<LabelMetrics> {
    (0..cm.k())
        .map(|i| {
            let hit = cm.counts[i][i];
            let support = cm.row_sum(i);
            let recall = ratio(hit, support);
            let precision = ratio(hit, cm.col_sum(i));
            LabelMetrics {
                label: cm.labels[i].clone(),
                support,
                recall,
                precision,
                f1: f1_score(precision, recall),
            }
        })
        .collect()
}

/// `Σ wᵢ·xᵢ / Σ wᵢ`; zero when the weights sum to zero.
pub fn support_weighted(weights: &[f64], values: &[f64]) -> f64 {
    assert_eq!(weights.len(), values.len(), "weights and values differ in length");
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub per_label: Vec<LabelMetrics>,
    pub accuracy: f64,
    pub w_recall: f64,
    pub w_precision: f64,
    pub w_f1: f64,
    pub parse_rate: f64,
    pub n_pairs: u64,
    /// Accuracy counting unparsable responses as wrong, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_accuracy: Option<f64>,
}

/// Support-weighted aggregates over the parsable pairs.
///
/// Supports are integers, so the weighted recall is computed as
/// `Σ diagᵢ / n`, which is exactly the accuracy.
pub fn weighted_metrics(per_label: &[LabelMetrics], eval_set: &EvaluationSet) -> DatasetMetrics {
    let n: u64 = per_label.iter().map(|m| m.support).sum();
    debug_assert_eq!(n as usize, eval_set.pairs.len());
    let correct = eval_set.pairs.iter().filter(|p| p.agrees()).count() as u64;
    let weighted = |f: fn(&LabelMetrics) -> f64| -> f64 {
        if n == 0 {
            return 0.0;
        }
        per_label.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / n as f64
    };
    // recall_i * support_i = diag_i, so sum the integer diagonal directly
    let diag: u64 = per_label
        .iter()
        .map(|m| (m.recall * m.support as f64).round() as u64)
        .sum();
    let accuracy = ratio(correct, n);
    DatasetMetrics {
        per_label: per_label.to_vec(),
        accuracy,
        w_recall: ratio(diag, n),
        w_precision: weighted(|m| m.precision),
        w_f1: weighted(|m| m.f1),
        parse_rate: ratio(eval_set.pairs.len() as u64, eval_set.n_submitted() as u64),
        n_pairs: n,
        strict_accuracy: None,
    }
}

/// Confusion matrix, per-label and weighted metrics in one call.
pub fn evaluate(eval_set: &EvaluationSet, strict_unparsable: bool) -> Result<(DatasetMetrics, ConfusionMatrix), MetricsError> {
    let cm = confusion_matrix(eval_set)?;
    let per_label = per_label_metrics(&cm);
    let mut metrics = weighted_metrics(&per_label, eval_set);
    if strict_unparsable {
        metrics.strict_accuracy = Some(ratio(cm.trace(), cm.total() + eval_set.n_unparsable as u64));
    }
    Ok((metrics, cm))
}
