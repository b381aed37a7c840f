//! Zero-shot classification prompt rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TaskConfig, TextItem};

pub const TOPIC: &str = "{topic}";
pub const LABELS: &str = "{labels}";
pub const TEXT: &str = "{text}";
pub const PLACEHOLDERS: [&str; 3] = [TOPIC, LABELS, TEXT];

/// The line that asks the model to answer with a bare label.
pub const DESIRED_FORMAT: &str = "Desired format: <label_for_classification>";

pub const DEFAULT_TEMPLATE: &str = "Classify the text about {topic} with a label from [{labels}].\nText: \"{text}\".\nDesired format: <label_for_classification>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("prompt template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("item {0} has empty text")]
    EmptyText(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub task_name: String,
    pub item_id: String,
}

/// Renders the task's template for one item.
///
/// Substitution is a single left-to-right pass over the template, so
/// placeholder-like sequences inside the topic, labels or item text are
/// copied verbatim. Templates that omit the desired-format line get it
/// appended on a line of its own.
pub fn render_prompt(task: &TaskConfig, item: &TextItem) -> Result<RenderedPrompt, TemplateError> {
    if item.text.trim().is_empty() {
        return Err(TemplateError::EmptyText(item.id.clone()));
    }
    let template = task.prompt_template.as_str();
    for placeholder in PLACEHOLDERS {
        if !template.contains(placeholder) {
            return Err(TemplateError::MissingPlaceholder(placeholder));
        }
    }

    let labels = task
        .labels
        .iter()
        .map(|l| l.raw())
        .collect::<Vec<_>>()
        .join(", ");

    let mut text = String::with_capacity(template.len() + item.text.len() + labels.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let tail = &rest[open..];
        let (value, len) = if tail.starts_with(TOPIC) {
            (task.topic.as_str(), TOPIC.len())
        } else if tail.starts_with(LABELS) {
            (labels.as_str(), LABELS.len())
        } else if tail.starts_with(TEXT) {
            (item.text.as_str(), TEXT.len())
        } else {
            ("{", 1)
        };
        text.push_str(value);
        rest = &tail[len..];
    }
    text.push_str(rest);

    if !template.contains(DESIRED_FORMAT) {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(DESIRED_FORMAT);
    }

    Ok(RenderedPrompt {
        text,
        task_name: task.name.clone(),
        item_id: item.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;
    use proptest::prelude::*;

    fn item(text: &str) -> TextItem {
        TextItem {
            id: "i".into(),
            text: text.into(),
            human_label: Label::new("A").unwrap(),
        }
    }

    #[test]
    fn direct_substitution() {
        let task = TaskConfig::with_labels("t", "T", &["A", "B"], "m").unwrap();
        let p = render_prompt(&task, &item("x")).unwrap();
        assert_eq!(
            p.text,
            "Classify the text about T with a label from [A, B].\nText: \"x\".\nDesired format: <label_for_classification>"
        );
    }

    #[test]
    fn racism_tweet_prompt() {
        let task = TaskConfig::with_labels(
            "covid-hate",
            "COVID-19",
            &["Hate", "Counterspeech", "Neutral"],
            "gpt-3.5-turbo",
        )
        .unwrap();
        let tweet = "for the last f**king time.... CORONAVIRUS IS NO EXCUSE TO BE RACIST AGAINST ASIANS https://t.co/nBHTadCKzK";
        let p = render_prompt(&task, &item(tweet)).unwrap();
        let expected = "Classify the text about COVID-19 with a label from [Hate, Counterspeech, Neutral].\n\
Text: \"for the last f**king time.... CORONAVIRUS IS NO EXCUSE TO BE RACIST AGAINST ASIANS https://t.co/nBHTadCKzK\".\n\
Desired format: <label_for_classification>";
        assert_eq!(p.text, expected);
    }

    #[test]
    fn missing_placeholder() {
        let mut task = TaskConfig::with_labels("t", "T", &["A", "B"], "m").unwrap();
        task.prompt_template = "About {topic}: {text}".into();
        assert_eq!(
            render_prompt(&task, &item("x")),
            Err(TemplateError::MissingPlaceholder(LABELS))
        );
    }

    #[test]
    fn custom_template_gets_format_line() {
        let mut task = TaskConfig::with_labels("t", "T", &["A", "B"], "m").unwrap();
        task.prompt_template = "{topic} | {labels} | {text}".into();
        let p = render_prompt(&task, &item("x {labels}")).unwrap();
        assert_eq!(p.text, "T | A, B | x {labels}\nDesired format: <label_for_classification>");
    }

    #[test]
    fn inner_quotes_preserved() {
        let task = TaskConfig::with_labels("t", "T", &["A", "B"], "m").unwrap();
        let p = render_prompt(&task, &item("he said \"no\"")).unwrap();
        assert!(p.text.contains("Text: \"he said \"no\"\".\n"));
    }

    proptest! {
        #[test]
        fn text_bytes_survive(text in "\\PC{1,80}", other in "\\PC{1,80}") {
            prop_assume!(!text.trim().is_empty() && !other.trim().is_empty());
            let task = TaskConfig::with_labels("t", "Topic", &["A", "B", "C"], "m").unwrap();
            let a = render_prompt(&task, &item(&text)).unwrap();
            prop_assert!(a.text.contains(&text));
            let b = render_prompt(&task, &item(&other)).unwrap();
            prop_assert_eq!(a.text == b.text, text == other);
        }
    }
}
