//! Meta-classifier predicting whether the model's label will match the
//! human label for an item, trained on the item's document embedding.

mod forest;
mod holdout;
mod logreg;
pub mod seed;
mod spearman;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingTable;
use crate::model::EvaluationSet;

pub use forest::{fit_random_forest, ForestModel, ForestParams, MaxFeatures, SplitCriterion, Tree, TreeNode};
pub use holdout::{
    evaluate_split, min_sufficient_proportion, parse_proportions, proportion_sweep, quartiles,
    repeated_holdout, ProportionStats, RepeatScore, RepeatedEvalResult, SweepResult,
    DEFAULT_GAP, DEFAULT_PROPORTIONS,
};
pub use logreg::{fit_logistic_regression, fit_logistic_regression_traced, log_loss, LogRegParams, LogisticModel};
pub use spearman::{average_ranks, spearman, CorrelationMethod, CorrelationResult, EXACT_MAX_N};
pub use synthetic::gen_synthetic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RaterError {
    #[error("item {0}: no embedding row")]
    MissingEmbedding(String),
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("expected {expected}-dimensional input, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input has zero rank variance")]
    ConstantInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One training row: embedding and whether the model agreed with the human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterExample {
    pub item_id: String,
    pub x: Vec<f64>,
    pub y: u8,
}

/// One example per parsable pair; `y = 1` iff the labels agree.
pub fn build_examples(eval_set: &EvaluationSet, embeddings: &EmbeddingTable) -> Result<Vec<RaterExample>, RaterError> {
    eval_set
        .pairs
        .iter()
        .map(|pair| {
            let x = embeddings
                .get(&pair.item_id)
                .ok_or_else(|| RaterError::MissingEmbedding(pair.item_id.clone()))?;
            Ok(RaterExample {
                item_id: pair.item_id.clone(),
                x: x.to_vec(),
                y: u8::from(pair.agrees()),
            })
        })
        .collect()
}

/// Row-major design matrix with binary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub y: Vec<u8>,
}

impl Features {
    pub fn from_examples(examples: &[RaterExample]) -> Result<Self, RaterError> {
        let idx: Vec<usize> = (0..examples.len()).collect();
        Self::select(examples, &idx)
    }

    /// Gathers the given rows into a contiguous matrix.
    pub fn select(examples: &[RaterExample], rows: &[usize]) -> Result<Self, RaterError> {
        let dim = rows.first().map_or(0, |&r| examples[r].x.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            let ex = &examples[r];
            if ex.x.len() != dim {
                return Err(RaterError::DimensionMismatch {
                    expected: dim,
                    got: ex.x.len(),
                });
            }
            data.extend_from_slice(&ex.x);
            y.push(ex.y);
        }
        Ok(Self { n: rows.len(), dim, data, y })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn check_two_classes(&self) -> Result<(), RaterError> {
        let pos = self.n_positive();
        if self.n < 2 || pos == 0 || pos == self.n {
            Err(RaterError::DegenerateLabels)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hyperparameters", rename_all = "snake_case")]
pub enum ClassifierSpec {
    LogisticRegression(LogRegParams),
    RandomForest(ForestParams),
}

impl ClassifierSpec {
    pub fn logistic() -> Self {
        ClassifierSpec::LogisticRegression(LogRegParams::default())
    }

    pub fn forest() -> Self {
        ClassifierSpec::RandomForest(ForestParams::default())
    }

    pub fn validate(&self) -> Result<(), RaterError> {
        match self {
            ClassifierSpec::LogisticRegression(p) => p.validate(),
            ClassifierSpec::RandomForest(p) => p.validate(),
        }
    }
}

/// A fitted classifier. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    LogisticRegression(LogisticModel),
    RandomForest(ForestModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::LogisticRegression(m) => m.dim(),
            Model::RandomForest(m) => m.dim(),
        }
    }

    /// Predicted class and the score for class 1.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64), RaterError> {
        if x.len() != self.dim() {
            return Err(RaterError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            Model::LogisticRegression(m) => m.predict_unchecked(x),
            Model::RandomForest(m) => m.predict_unchecked(x),
        })
    }
}

pub fn predict(model: &Model, x: &[f64]) -> Result<(u8, f64), RaterError> {
    model.predict(x)
}

pub fn fit(spec: &ClassifierSpec, data: &Features, seed: u64) -> Result<Model, RaterError> {
    match spec {
        ClassifierSpec::LogisticRegression(p) => fit_logistic_regression(data, p).map(Model::LogisticRegression),
        ClassifierSpec::RandomForest(p) => fit_random_forest(data, p, seed).map(Model::RandomForest),
    }
}

/// Self-describing persisted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: ClassifierSpec,
    pub dim: usize,
    pub seed: u64,
    pub n_train: usize,
    pub model: Model,
}
