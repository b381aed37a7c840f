use std::sync::atomic::{AtomicU64, Ordering};

use annorater_core::rater::seed::rng_for;
use reqwest::StatusCode;
use serde::Serialize;
use serde_json::Value;

use super::{Backoff, BackendConfig, Completion, GatewayError};

/// Client for chat-completions and embeddings endpoints.
#[derive(Debug)]
pub struct RemoteClient {
    http: reqwest::Client,
    base: String,
    key: String,
    model: String,
    temperature: f64,
    max_retries: u32,
    backoff: Backoff,
    seed: u64,
    requests: AtomicU64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

impl RemoteClient {
    pub fn new(cfg: &BackendConfig, key: String) -> Result<Self, GatewayError> {
        let base = cfg
            .base_url
            .clone()
            .ok_or_else(|| GatewayError::Config("remote backend requires a base URL".into()))?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            http,
            base: base.trim_end_matches('/').to_string(),
            key,
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            backoff: cfg.backoff,
            seed: cfg.seed,
            requests: AtomicU64::new(0),
        })
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// POSTs `body`, retrying 429, 5xx and transport failures. `salt`
    /// decorrelates the jitter of concurrent callers.
    async fn post_json(&self, path: &str, body: &impl Serialize, salt: u64) -> Result<(Value, u32), GatewayError> {
        let url = format!("{}/{path}", self.base);
        let mut rng = rng_for(self.seed, &[salt]);
        let mut last_cause = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                tokio::time::sleep(self.backoff.delay(attempt - 1, &mut rng)).await;
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let attempts = attempt + 1;
            let resp = match self.http.post(&url).bearer_auth(&self.key).json(body).send().await {
                Ok(r) => r,
                Err(e) => {
                    last_cause = format!("transport: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                match resp.json::<Value>().await {
                    Ok(v) => return Ok((v, attempts)),
                    Err(e) => {
                        last_cause = format!("reading response body: {e}");
                        continue;
                    }
                }
            }
            if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                return Err(GatewayError::Auth(format!("HTTP {}", status.as_u16())));
            }
            last_cause = format!("HTTP {}", status.as_u16());
            if status != StatusCode::TOO_MANY_REQUESTS && !status.is_server_error() {
                return Err(GatewayError::ApiFailure {
                    cause: last_cause,
                    attempts,
                });
            }
        }
        Err(GatewayError::ApiFailure {
            cause: last_cause,
            attempts: self.max_retries + 1,
        })
    }

    /// Content of the first choice's assistant message.
    pub async fn complete(&self, prompt: &str, salt: u64) -> Result<Completion, GatewayError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
        };
        let (value, attempts) = self.post_json("chat/completions", &body, salt).await?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::ApiFailure {
                cause: "response has no choices[0].message.content".into(),
                attempts,
            })?;
        Ok(Completion {
            content: content.to_string(),
            attempts,
        })
    }

    /// One vector per input, in input order.
    pub async fn embed(&self, input: &[String], salt: u64) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = EmbeddingRequest {
            model: &self.model,
            input,
        };
        let (value, attempts) = self.post_json("embeddings", &body, salt).await?;
        let malformed = |what: &str| GatewayError::ApiFailure {
            cause: format!("malformed embeddings response: {what}"),
            attempts,
        };
        let data = value.get("data").and_then(Value::as_array).ok_or_else(|| malformed("no data array"))?;
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; input.len()];
        for (pos, entry) in data.iter().enumerate() {
            let index = entry.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vector: Vec<f64> = entry
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("entry without embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric component")))
                .collect::<Result<_, _>>()?;
            let slot = slots.get_mut(index).ok_or_else(|| malformed("index out of range"))?;
            *slot = Some(vector);
        }
        slots
            .into_iter()
            .map(|s| s.ok_or_else(|| malformed("missing entry")))
            .collect()
    }
}
