//! Label extraction from raw model responses.
//!
//! A response parses when, after light cleanup, it either is exactly one
//! candidate label or mentions exactly one label without much else.

use serde::{Deserialize, Serialize};

use crate::model::Label;

/// Default cap on response length relative to the matched label.
pub const DEFAULT_VERBOSITY_FACTOR: f64 = 3.0;

const WRAPPERS: [(char, char); 4] = [('<', '>'), ('"', '"'), ('\'', '\''), ('`', '`')];
const TRAILING: [char; 3] = ['.', '!', ';'];

/// Cleans a response (or label) for comparison: trim, strip one wrapping
/// pair, strip trailing `.`/`!`/`;`, lowercase, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let mut s = text.trim();
    let mut chars = s.chars();
    if let (Some(first), Some(last)) = (chars.next(), chars.next_back()) {
        if WRAPPERS.iter().any(|&(open, close)| first == open && last == close) {
            s = &s[first.len_utf8()..s.len() - last.len_utf8()];
        }
    }
    let s = s.trim().trim_end_matches(TRAILING);
    let folded = s.to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// [`normalize`] applied until nothing changes; the canonical form of a label.
pub fn canonicalize(text: &str) -> String {
    let mut current = normalize(text);
    loop {
        let next = normalize(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparsableReason {
    NoLabelFound,
    MultipleLabels,
    VerboseResponse,
}

impl UnparsableReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnparsableReason::NoLabelFound => "no_label_found",
            UnparsableReason::MultipleLabels => "multiple_labels",
            UnparsableReason::VerboseResponse => "verbose_response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { label: Label },
    Unparsable { reason: UnparsableReason },
}

impl ParseOutcome {
    pub fn label(&self) -> Option<&Label> {
        match self {
            ParseOutcome::Parsed { label } => Some(label),
            ParseOutcome::Unparsable { .. } => None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        matches!(self, ParseOutcome::Parsed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    /// A containment match is rejected as verbose when the normalized
    /// response is longer than this many times the label.
    pub verbosity_factor: f64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            verbosity_factor: DEFAULT_VERBOSITY_FACTOR,
        }
    }
}

/// A located label mention inside a normalized response (byte offsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Boundary-respecting occurrences of every label, with mentions lying
/// inside a longer label's mention removed.
pub fn label_occurrences(normalized: &str, labels: &[Label]) -> Vec<Occurrence> {
    let mut found = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        let needle = label.canonical();
        let first_is_word = needle.chars().next().is_some_and(is_word_char);
        let last_is_word = needle.chars().next_back().is_some_and(is_word_char);
        let mut from = 0;
        while let Some(pos) = normalized[from..].find(needle) {
            let start = from + pos;
            let end = start + needle.len();
            let before_ok = !first_is_word
                || normalized[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok =
                !last_is_word || normalized[end..].chars().next().is_none_or(|c| !is_word_char(c));
            if before_ok && after_ok {
                found.push(Occurrence { label: idx, start, end });
            }
            from = start + normalized[start..].chars().next().map_or(1, char::len_utf8);
        }
    }
    found
        .iter()
        .filter(|a| {
            !found.iter().any(|b| {
                b.label != a.label
                    && b.end - b.start > a.end - a.start
                    && b.start <= a.start
                    && a.end <= b.end
            })
        })
        .copied()
        .collect()
}

/// Parses with the default verbosity cap.
pub fn parse_response(raw: &str, labels: &[Label]) -> ParseOutcome {
    parse_response_with(raw, labels, &ParserConfig::default())
}

pub fn parse_response_with(raw: &str, labels: &[Label], cfg: &ParserConfig) -> ParseOutcome {
    let normalized = normalize(raw);

    if let Some(label) = labels.iter().find(|l| l.canonical() == normalized) {
        return ParseOutcome::Parsed { label: label.clone() };
    }

    let occurrences = label_occurrences(&normalized, labels);
    let mut hit: Vec<usize> = occurrences.iter().map(|o| o.label).collect();
    hit.sort_unstable();
    hit.dedup();

    match hit.as_slice() {
        [] => ParseOutcome::Unparsable {
            reason: UnparsableReason::NoLabelFound,
        },
        [only] => {
            let label = &labels[*only];
            let limit = cfg.verbosity_factor * label.canonical().chars().count() as f64;
            if normalized.chars().count() as f64 <= limit {
                ParseOutcome::Parsed { label: label.clone() }
            } else {
                ParseOutcome::Unparsable {
                    reason: UnparsableReason::VerboseResponse,
                }
            }
        }
        _ => ParseOutcome::Unparsable {
            reason: UnparsableReason::MultipleLabels,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(raw: &[&str]) -> Vec<Label> {
        raw.iter().map(|r| Label::new(*r).unwrap()).collect()
    }

    fn parsed(l: &str) -> ParseOutcome {
        ParseOutcome::Parsed {
            label: Label::new(l).unwrap(),
        }
    }

    fn unparsable(reason: UnparsableReason) -> ParseOutcome {
        ParseOutcome::Unparsable { reason }
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(normalize("<Neutral>"), "neutral");
        assert_eq!(normalize("  Pro-vaccine. "), "pro-vaccine");
        assert_eq!(normalize("Hate"), "hate");
        assert_eq!(normalize("`Not   clickbait`"), "not clickbait");
        // wrappers are stripped before trailing punctuation
        assert_eq!(normalize("`Hate`!"), "`hate`");
        assert_eq!(normalize("\"<Hate>\""), "<hate>");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("\""), "\"");
    }

    #[test]
    fn strict_match() {
        let ls = labels(&["Hate", "Counterspeech", "Neutral"]);
        assert_eq!(parse_response("Hate", &ls), parsed("Hate"));
        assert_eq!(parse_response(" neutral.", &ls), parsed("Neutral"));
    }

    #[test]
    fn refusal_mentioning_both_labels() {
        let ls = labels(&["Pro-Russia", "Pro-Ukraine"]);
        let raw = "Cannot classify the given text about Russo-Ukrainian War with the label [Pro-Russia, Pro-Ukraine] as it does not provide any relevant information about the topic.";
        assert_eq!(parse_response(raw, &ls), unparsable(UnparsableReason::MultipleLabels));
    }

    #[test]
    fn counterhate_is_not_hate() {
        let ls = labels(&["Hate", "Counterhate", "Neutral"]);
        assert_eq!(parse_response("Label: counterhate", &ls), parsed("Counterhate"));
        assert_eq!(parse_response("Label: hate", &ls), parsed("Hate"));
    }

    #[test]
    fn suppression_needs_a_longer_label() {
        let ls = labels(&["Hate", "Not hate"]);
        assert_eq!(parse_response("Not hate", &ls), parsed("Not hate"));
        assert_eq!(parse_response("It is: not hate", &ls), parsed("Not hate"));
        assert_eq!(parse_response("hate, not hate", &ls), unparsable(UnparsableReason::MultipleLabels));
    }

    #[test]
    fn verbose_and_missing() {
        let ls = labels(&["Hate", "Counterhate", "Neutral"]);
        assert_eq!(
            parse_response("I think that this tweet is probably neutral overall", &ls),
            unparsable(UnparsableReason::VerboseResponse)
        );
        assert_eq!(parse_response("Positive", &ls), unparsable(UnparsableReason::NoLabelFound));
        assert_eq!(parse_response("", &ls), unparsable(UnparsableReason::NoLabelFound));
        // "hateful" is not a word-boundary mention of "hate"
        assert_eq!(parse_response("hateful", &ls), unparsable(UnparsableReason::NoLabelFound));
    }

    #[test]
    fn verbosity_factor_is_configurable() {
        let ls = labels(&["Hate", "Neutral"]);
        let loose = ParserConfig { verbosity_factor: 100.0 };
        let raw = "I think that this tweet is probably neutral overall";
        assert_eq!(parse_response_with(raw, &ls, &loose), parsed("Neutral"));
    }

    /// Brute-force scanner: every substring equal to a label with word
    /// boundaries, then drop those strictly inside a longer label's match.
    fn brute_force_hits(text: &str, labels: &[Label]) -> Vec<usize> {
        let chars: Vec<char> = text.chars().collect();
        let mut occ = Vec::new();
        for i in 0..chars.len() {
            for j in i + 1..=chars.len() {
                let sub: String = chars[i..j].iter().collect();
                for (k, l) in labels.iter().enumerate() {
                    if sub == l.canonical() {
                        let left = i == 0 || !is_word_char(chars[i - 1]) || !is_word_char(chars[i]);
                        let right =
                            j == chars.len() || !is_word_char(chars[j]) || !is_word_char(chars[j - 1]);
                        if left && right {
                            occ.push((k, i, j));
                        }
                    }
                }
            }
        }
        let mut hits: Vec<usize> = occ
            .iter()
            .filter(|&&(k, i, j)| !occ.iter().any(|&(k2, i2, j2)| k2 != k && j2 - i2 > j - i && i2 <= i && j <= j2))
            .map(|&(k, _, _)| k)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    #[test]
    fn scanner_agrees_with_brute_force() {
        let ls = labels(&["Hate", "Counterhate", "Neutral"]);
        for text in [
            "label: counterhate",
            "hate or counterhate",
            "counterhate hate",
            "neutralhate",
            "hate",
            "counter hate",
        ] {
            let mut fast: Vec<usize> = label_occurrences(text, &ls).iter().map(|o| o.label).collect();
            fast.sort_unstable();
            fast.dedup();
            assert_eq!(fast, brute_force_hits(text, &ls), "{text}");
        }
    }

    proptest! {
        #[test]
        fn scanner_matches_oracle_on_random_text(words in prop::collection::vec(
            prop::sample::select(vec!["hate", "counterhate", "neutral", "counter", "x", "not", ":", "-"]), 0..8)) {
            let ls = labels(&["Hate", "Counterhate", "Neutral", "Not hate"]);
            let text = words.join(" ");
            let mut fast: Vec<usize> = label_occurrences(&text, &ls).iter().map(|o| o.label).collect();
            fast.sort_unstable();
            fast.dedup();
            prop_assert_eq!(fast, brute_force_hits(&text, &ls));
        }

        #[test]
        fn normalize_is_idempotent_on_canonical(s in "\\PC{0,40}") {
            let c = canonicalize(&s);
            prop_assert_eq!(canonicalize(&c), c.clone());
            prop_assert_eq!(normalize(&c), c);
        }

        #[test]
        fn permutation_never_changes_outcome(raw in "[a-zA-Z :<>.]{0,30}", seed in 0usize..24) {
            let mut ls = labels(&["Hate", "Counterhate", "Neutral", "Not hate"]);
            let before = parse_response(&raw, &ls);
            // walk a fixed permutation family
            ls.rotate_left(seed % 4);
            ls.swap(0, (seed / 4) % 4);
            prop_assert_eq!(before, parse_response(&raw, &ls));
        }

        #[test]
        fn padded_single_label_is_never_multiple(
            idx in 0usize..4,
            pad in prop::collection::vec(prop::sample::select(vec!["label", "is", "the", "answer", "ok", "my", ":"]), 0..=2),
            before in any::<bool>(),
        ) {
            let ls = labels(&["Hate", "Counterhate", "Neutral", "Anti-vaccine"]);
            let label = ls[idx].raw().to_string();
            let padding = pad.join(" ");
            let raw = if before { format!("{padding} {label}") } else { format!("{label} {padding}") };
            let outcome = parse_response(&raw, &ls);
            prop_assert_ne!(outcome, ParseOutcome::Unparsable { reason: UnparsableReason::MultipleLabels });
        }
    }
}
