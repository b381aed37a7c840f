//! Model backends and the bounded-concurrency job runners.

mod job;
mod mock;
mod remote;

use std::time::Duration;

use annorater_core::prompt::RenderedPrompt;
use rand::Rng;
use thiserror::Error;

pub use job::{embed_batch, run_annotation_job, JobSummary};
pub use mock::{mock_embed, MockBackend, MockRule, MockRules};
pub use remote::RemoteClient;

pub const API_KEY_VAR: &str = "ANNORATER_API_KEY";
pub const API_BASE_VAR: &str = "ANNORATER_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request failed after {attempts} attempt(s): {cause}")]
    ApiFailure { cause: String, attempts: u32 },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("provider returned vectors of dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Embedding(#[from] annorater_core::embedding::EmbeddingError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Template(#[from] annorater_core::prompt::TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Remote,
    Mock,
}

/// Exponential backoff: `base · 2^attempt`, jittered by up to `jitter`
/// in either direction, never above `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
    pub jitter: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(30),
            jitter: 0.2,
        }
    }
}

impl Backoff {
    /// Delay before retry number `attempt` (0 for the first retry).
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.base.as_secs_f64() * 2f64.powi(attempt.min(62) as i32);
        let factor = 1.0 + rng.random_range(-self.jitter..=self.jitter);
        Duration::from_secs_f64((nominal * factor).min(self.cap.as_secs_f64()).max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Required for remote backends.
    pub base_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// At least 1.
    pub concurrency: usize,
    pub backoff: Backoff,
    /// Seeds retry jitter and mock embeddings.
    pub seed: u64,
}

impl BackendConfig {
    pub fn mock(model_name: impl Into<String>, seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: model_name.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            concurrency: 1,
            backoff: Backoff::default(),
            seed,
        }
    }

    /// Remote settings with the base URL taken from the environment when
    /// present.
    pub fn remote(model_name: impl Into<String>, seed: u64) -> Self {
        Self {
            kind: BackendKind::Remote,
            base_url: Some(std::env::var(API_BASE_VAR).unwrap_or_else(|_| DEFAULT_API_BASE.to_string())),
            ..Self::mock(model_name, seed)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.model_name.trim().is_empty() {
            return bad("model name is empty");
        }
        if self.kind == BackendKind::Remote && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            return bad("remote backend requires a base URL");
        }
        Ok(())
    }
}

/// Response text plus the number of requests it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub attempts: u32,
}

pub enum Backend {
    Remote(RemoteClient),
    Mock(MockBackend),
}

impl Backend {
    /// Builds the backend described by `cfg`. Remote backends read the API
    /// key from the environment.
    pub fn from_config(cfg: &BackendConfig, rules: MockRules) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BackendKind::Mock => Backend::Mock(MockBackend::new(rules)),
            BackendKind::Remote => {
                let key = std::env::var(API_KEY_VAR).map_err(|_| GatewayError::Auth(format!("{API_KEY_VAR} is not set")))?;
                Backend::Remote(RemoteClient::new(cfg, key)?)
            }
        })
    }

    /// `salt` distinguishes concurrent requests for retry jitter.
    pub async fn complete(&self, prompt: &RenderedPrompt, salt: u64) -> Result<Completion, GatewayError> {
        match self {
            Backend::Mock(m) => Ok(m.complete(&prompt.text)),
            Backend::Remote(r) => r.complete(&prompt.text, salt).await,
        }
    }

    /// Requests issued so far, counting every retry.
    pub fn request_count(&self) -> u64 {
        match self {
            Backend::Mock(m) => m.request_count(),
            Backend::Remote(r) => r.request_count(),
        }
    }

    pub fn provider(&self, cfg: &BackendConfig) -> String {
        match self {
            Backend::Mock(_) => format!("mock:{}", cfg.seed),
            Backend::Remote(_) => cfg.model_name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use annorater_core::rater::seed::rng_for;

    #[test]
    fn backoff_schedule_bounds() {
        let b = Backoff::default();
        let mut rng = rng_for(1, &[]);
        for attempt in 0..8 {
            let nominal = (2f64.powi(attempt as i32)).min(30.0);
            for _ in 0..50 {
                let d = b.delay(attempt, &mut rng).as_secs_f64();
                assert!(d <= 30.0 + 1e-9);
                assert!(d >= (nominal * 0.8).min(30.0) - 1e-9, "attempt {attempt}: {d}");
                assert!(d <= nominal * 1.2 + 1e-9);
            }
        }
    }

    #[test]
    fn config_rules() {
        let mut cfg = BackendConfig::mock("m", 0);
        assert!(cfg.validate().is_ok());
        cfg.concurrency = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = BackendConfig::mock("m", 0);
        cfg.kind = BackendKind::Remote;
        assert!(matches!(cfg.validate(), Err(GatewayError::Config(_))));
    }
}
