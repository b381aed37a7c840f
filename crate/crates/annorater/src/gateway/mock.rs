use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completion, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Case-sensitive substring of the prompt; never empty.
    pub pattern: String,
    pub response: String,
}

/// Ordered rule table; the first matching pattern wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRules {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    pub default_response: String,
}

impl MockRules {
    pub fn answering(default_response: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default_response: default_response.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let rules: Self = serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("mock rules: {e}")))?;
        if let Some(i) = rules.rules.iter().position(|r| r.pattern.is_empty()) {
            return Err(GatewayError::Config(format!("mock rule {i} has an empty pattern")));
        }
        Ok(rules)
    }

    pub fn respond(&self, prompt: &str) -> &str {
        self.rules
            .iter()
            .find(|r| prompt.contains(&r.pattern))
            .map_or(&self.default_response, |r| &r.response)
    }
}

/// Pure, reentrant backend driven by a rule table. Counts requests so
/// tests can observe how many items were submitted.
#[derive(Debug)]
pub struct MockBackend {
    rules: MockRules,
    requests: AtomicU64,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        Self {
            rules,
            requests: AtomicU64::new(0),
        }
    }

    pub fn complete(&self, prompt: &str) -> Completion {
        self.requests.fetch_add(1, Ordering::Relaxed);
        Completion {
            content: self.rules.respond(prompt).to_string(),
            attempts: 1,
        }
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

fn hashed_gaussians(seed: u64, tag: &[u8], bytes: &[u8], dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    h.update(bytes);
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Deterministic unit-norm embedding of `text`.
///
/// Lowercased word tokens each contribute a hash-seeded Gaussian direction,
/// so texts sharing words land near each other; a component keyed by the
/// exact bytes keeps distinct texts apart.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let mut v = hashed_gaussians(seed, b"text", text.as_bytes(), dim);
    v.iter_mut().for_each(|x| *x *= 0.5);
    if !tokens.is_empty() {
        let w = 1.0 / (tokens.len() as f64).sqrt();
        for t in &tokens {
            for (acc, g) in v.iter_mut().zip(hashed_gaussians(seed, b"token", t.as_bytes(), dim)) {
                *acc += w * g;
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v = vec![0.0; dim];
        v[0] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn first_matching_rule_wins() {
        let rules = MockRules::from_json(
            r#"{"rules":[{"pattern":"RACIST","response":"Counterspeech"},{"pattern":"RAC","response":"Hate"}],"default_response":"Neutral"}"#,
        )
        .unwrap();
        let prompt = "Classify the text about COVID-19 racism with a label from [Hate, Counterspeech, Neutral].\nText: \"STOP THIS RACIST TRASH\".";
        assert_eq!(rules.respond(prompt), "Counterspeech");
        assert_eq!(rules.respond("racist"), "Neutral");
    }

    #[test]
    fn empty_pattern_rejected() {
        let err = MockRules::from_json(r#"{"rules":[{"pattern":"","response":"x"}],"default_response":"y"}"#);
        assert!(matches!(err, Err(GatewayError::Config(_))));
    }

    #[test]
    fn embedding_deterministic() {
        assert_eq!(mock_embed("abc", 8, 42), mock_embed("abc", 8, 42));
        assert_ne!(mock_embed("abc", 8, 42), mock_embed("abc", 8, 43));
    }

    #[test]
    fn thousand_texts_no_collisions() {
        let mut seen = HashSet::new();
        for i in 0..1000 {
            let v = mock_embed(&format!("text number {i}"), 64, 1);
            let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision at {i}");
        }
    }

    #[test]
    fn shared_words_are_closer() {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let a = mock_embed("vaccines cause harm", 64, 3);
        let b = mock_embed("vaccines cause no harm", 64, 3);
        let c = mock_embed("the weather is nice today", 64, 3);
        assert!(dot(&a, &b) > dot(&a, &c));
    }

    proptest! {
        #[test]
        fn unit_norm(text in ".{0,40}", dim in 1usize..40, seed in any::<u64>()) {
            let v = mock_embed(&text, dim, seed);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert_eq!(v.len(), dim);
            prop_assert!((norm - 1.0).abs() < 1e-6);
        }
    }
}
