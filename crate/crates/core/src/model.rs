//! Shared domain types for annotation tasks and their validation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::parse::canonicalize;
use crate::prompt::{DEFAULT_TEMPLATE, PLACEHOLDERS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label {0:?} has an empty canonical form")]
    Empty(String),
}

/// A candidate annotation label.
///
/// Identity is the canonical form, so `"Hate"` and `" hate "` name the
/// same label. The raw spelling is kept for prompts and reports.
#[derive(Debug, Clone)]
pub struct Label {
    raw: String,
    canonical: String,
}

impl Label {
    pub fn new(raw: impl Into<String>) -> Result<Self, LabelError> {
        let raw = raw.into();
        let canonical = canonicalize(&raw);
        if canonical.is_empty() {
            return Err(LabelError::Empty(raw));
        }
        Ok(Self { raw, canonical })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for Label {}

impl std::hash::Hash for Label {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.canonical.hash(state);
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Label::new(raw).map_err(serde::de::Error::custom)
    }
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

fn default_max_retries() -> u32 {
    3
}

/// An annotation task: what the texts are about and which labels apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub name: String,
    pub topic: String,
    pub labels: Vec<Label>,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl TaskConfig {
    /// A task using the default prompt template, temperature 0 and 3 retries.
    pub fn new(
        name: impl Into<String>,
        topic: impl Into<String>,
        labels: Vec<Label>,
        model_name: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            topic: topic.into(),
            labels,
            model_name: model_name.into(),
            temperature: 0.0,
            prompt_template: default_template(),
            max_retries: default_max_retries(),
        }
    }

    /// Convenience constructor from raw label spellings.
    pub fn with_labels(
        name: &str,
        topic: &str,
        labels: &[&str],
        model_name: &str,
    ) -> Result<Self, LabelError> {
        let labels = labels
            .iter()
            .map(|l| Label::new(*l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(name, topic, labels, model_name))
    }

    /// Index of the task label with the same canonical form.
    pub fn label_index(&self, label: &Label) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Looks a label up by any spelling that canonicalizes to a task label.
    pub fn find_label(&self, raw: &str) -> Option<&Label> {
        let canonical = canonicalize(raw);
        self.labels.iter().find(|l| l.canonical == canonical)
    }

    /// Task-level violations, in a fixed order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(Violation::EmptyTaskName);
        }
        if self.labels.len() < 2 {
            out.push(Violation::TooFewLabels(self.labels.len()));
        }
        let mut seen = HashSet::new();
        for label in &self.labels {
            if !seen.insert(label.canonical()) {
                out.push(Violation::DuplicateLabel(label.canonical().to_string()));
            }
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            out.push(Violation::TemperatureOutOfRange(self.temperature));
        }
        for placeholder in PLACEHOLDERS {
            if !self.prompt_template.contains(placeholder) {
                out.push(Violation::MissingPlaceholder(placeholder.to_string()));
            }
        }
        out
    }
}

/// One text to annotate, with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub id: String,
    pub text: String,
    pub human_label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskConfig,
    pub items: Vec<TextItem>,
}

/// A broken invariant found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "subject", rename_all = "snake_case")]
pub enum Violation {
    EmptyTaskName,
    TooFewLabels(usize),
    DuplicateLabel(String),
    TemperatureOutOfRange(f64),
    MissingPlaceholder(String),
    EmptyDataset,
    EmptyId,
    EmptyText(String),
    UnknownLabel(String),
    DuplicateId(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTaskName => write!(f, "task name is empty"),
            Violation::TooFewLabels(n) => write!(f, "task declares {n} labels, need at least 2"),
            Violation::DuplicateLabel(l) => write!(f, "label {l:?} declared twice"),
            Violation::TemperatureOutOfRange(t) => write!(f, "temperature {t} outside [0, 2]"),
            Violation::MissingPlaceholder(p) => write!(f, "prompt template lacks {p}"),
            Violation::EmptyDataset => write!(f, "dataset has no items"),
            Violation::EmptyId => write!(f, "item with empty id"),
            Violation::EmptyText(id) => write!(f, "item {id}: empty text"),
            Violation::UnknownLabel(id) => write!(f, "item {id}: human label not in task label set"),
            Violation::DuplicateId(id) => write!(f, "item {id}: duplicate id"),
        }
    }
}

/// Checks every task and item invariant. An empty result means the dataset
/// is well formed. Violations come out in a deterministic order: task rules
/// first, then items in file order.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = dataset.task.violations();
    if dataset.items.is_empty() {
        out.push(Violation::EmptyDataset);
    }
    let mut ids = HashSet::new();
    for item in &dataset.items {
        if item.id.is_empty() {
            out.push(Violation::EmptyId);
        }
        if !ids.insert(item.id.as_str()) {
            out.push(Violation::DuplicateId(item.id.clone()));
        }
        if item.text.trim().is_empty() {
            out.push(Violation::EmptyText(item.id.clone()));
        }
        if dataset.task.label_index(&item.human_label).is_none() {
            out.push(Violation::UnknownLabel(item.id.clone()));
        }
    }
    out
}

/// A gold label joined with the model's label for the same item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPair {
    pub item_id: String,
    pub human_label: Label,
    pub model_label: Label,
}

impl EvaluationPair {
    pub fn agrees(&self) -> bool {
        self.human_label == self.model_label
    }
}

/// Parsable pairs plus counts of everything that did not produce a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    pub task: TaskConfig,
    pub pairs: Vec<EvaluationPair>,
    pub n_unparsable: usize,
    pub n_api_failed: usize,
    /// Items that had no annotation record at all.
    pub n_missing: usize,
}

impl EvaluationSet {
    /// Items that were submitted to the model.
    pub fn n_submitted(&self) -> usize {
        self.pairs.len() + self.n_unparsable + self.n_api_failed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> TaskConfig {
        TaskConfig::with_labels("hate", "COVID-19", &["Hate", "Counterhate", "Neutral"], "m").unwrap()
    }

    fn item(id: &str, text: &str, label: &str) -> TextItem {
        TextItem {
            id: id.into(),
            text: text.into(),
            human_label: Label::new(label).unwrap(),
        }
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        let ds = Dataset {
            task: task(),
            items: vec![
                item("t1", "a", "Hate"),
                item("t2", "b", "Counterhate"),
                item("t3", "c", "Neutral"),
            ],
        };
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn unknown_and_duplicate_items_are_reported() {
        let ds = Dataset {
            task: task(),
            items: vec![item("t1", "a", "Hateful"), item("t2", "b", "hate")],
        };
        assert_eq!(validate_dataset(&ds), vec![Violation::UnknownLabel("t1".into())]);

        let ds = Dataset {
            task: task(),
            items: vec![item("t1", "a", "Hate"), item("t1", "b", "Neutral")],
        };
        assert_eq!(validate_dataset(&ds), vec![Violation::DuplicateId("t1".into())]);
    }

    #[test]
    fn empty_text_is_rejected() {
        let ds = Dataset {
            task: task(),
            items: vec![item("t1", "   ", "Hate")],
        };
        assert_eq!(validate_dataset(&ds), vec![Violation::EmptyText("t1".into())]);
    }

    #[test]
    fn task_rules() {
        let mut t = TaskConfig::with_labels("x", "T", &["A", " a "], "m").unwrap();
        t.temperature = 3.0;
        t.prompt_template = "{topic} {text}".into();
        let v = t.violations();
        assert_eq!(
            v,
            vec![
                Violation::DuplicateLabel("a".into()),
                Violation::TemperatureOutOfRange(3.0),
                Violation::MissingPlaceholder("{labels}".into()),
            ]
        );
        let ds = Dataset { task: task(), items: vec![] };
        assert_eq!(validate_dataset(&ds), vec![Violation::EmptyDataset]);
    }

    #[test]
    fn label_identity_is_canonical() {
        assert_eq!(Label::new("Hate").unwrap(), Label::new("  hate ").unwrap());
        assert_eq!(Label::new("Hate").unwrap().raw(), "Hate");
        assert!(Label::new("  ").is_err());
        assert!(Label::new("<>").is_err());
    }

    #[test]
    fn validation_is_pure() {
        let ds = Dataset {
            task: task(),
            items: vec![item("t1", "", "x"), item("t1", "a", "Hate"), item("t2", "", "y")],
        };
        let first = validate_dataset(&ds);
        assert_eq!(first.len(), 5);
        assert_eq!(first, validate_dataset(&ds));
    }
}
