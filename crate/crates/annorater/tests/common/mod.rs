//! Local chat-completions / embeddings stub with scripted faults.
#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use annorater::gateway::{Backend, BackendConfig, BackendKind, Backoff, RemoteClient};
use annorater_core::{Dataset, Label, TaskConfig, TextItem};
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// What the stub does for one item: `failures` error statuses, then success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Script {
    pub failures: u32,
    pub status: u16,
}

pub type Scripter = Arc<dyn Fn(usize) -> Script + Send + Sync>;

#[derive(Default)]
pub struct StubStats {
    pub in_flight: AtomicUsize,
    pub peak: AtomicUsize,
    pub chat_requests: AtomicUsize,
    pub embedding_requests: AtomicUsize,
    /// Requests seen per item number.
    pub per_item: Mutex<HashMap<usize, u32>>,
    pub bodies: Mutex<Vec<Value>>,
    pub auth_headers: Mutex<Vec<String>>,
}

struct StubState {
    stats: Arc<StubStats>,
    script: Scripter,
    latency: Duration,
    /// Dimension returned for the n-th embeddings request.
    embedding_dims: Arc<dyn Fn(usize) -> usize + Send + Sync>,
    accept_key: String,
}

/// Item number encoded in texts as `item-<n>`.
pub fn item_number(prompt: &str) -> usize {
    let start = prompt.find("item-").expect("prompt names its item") + 5;
    prompt[start..].chars().take_while(char::is_ascii_digit).collect::<String>().parse().unwrap()
}

async fn chat(State(st): State<Arc<StubState>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let stats = &st.stats;
    stats.chat_requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
    stats.auth_headers.lock().unwrap().push(auth.clone());
    stats.bodies.lock().unwrap().push(body.clone());
    tokio::time::sleep(st.latency).await;

    let reply = if auth != format!("Bearer {}", st.accept_key) {
        (StatusCode::UNAUTHORIZED, Json(json!({"error": {"message": "bad key"}})))
    } else {
        let prompt = body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or_default();
        let n = item_number(prompt);
        let seen = {
            let mut per = stats.per_item.lock().unwrap();
            let c = per.entry(n).or_insert(0);
            *c += 1;
            *c
        };
        let script = (st.script)(n);
        if seen <= script.failures {
            (StatusCode::from_u16(script.status).unwrap(), Json(json!({"error": {"message": "scripted"}})))
        } else {
            let label = if n % 2 == 0 { "Clickbait" } else { "Not clickbait" };
            (
                StatusCode::OK,
                Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": label}}]})),
            )
        }
    };
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    reply
}

async fn embeddings(State(st): State<Arc<StubState>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let k = st.stats.embedding_requests.fetch_add(1, Ordering::SeqCst);
    st.stats.bodies.lock().unwrap().push(body.clone());
    let dim = (st.embedding_dims)(k);
    let inputs = body.get("input").and_then(Value::as_array).cloned().unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let len = text.as_str().map_or(0, str::len) as f64;
            let v: Vec<f64> = (0..dim).map(|d| ((d as f64 + 1.0) * (len + i as f64)).sin()).collect();
            json!({"object": "embedding", "index": i, "embedding": v})
        })
        .collect();
    (StatusCode::OK, Json(json!({"object": "list", "data": data})))
}

pub struct Stub {
    pub addr: SocketAddr,
    pub stats: Arc<StubStats>,
}

impl Stub {
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

pub async fn spawn_stub(script: Scripter, latency: Duration, embedding_dims: Arc<dyn Fn(usize) -> usize + Send + Sync>) -> Stub {
    let stats = Arc::new(StubStats::default());
    let state = Arc::new(StubState {
        stats: stats.clone(),
        script,
        latency,
        embedding_dims,
        accept_key: "test-key".into(),
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Stub { addr, stats }
}

pub fn remote_config(base_url: String, concurrency: usize, max_retries: u32) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Remote,
        base_url: Some(base_url),
        model_name: "stub-model".into(),
        temperature: 0.0,
        timeout: Duration::from_secs(10),
        max_retries,
        concurrency,
        backoff: Backoff {
            base: Duration::from_millis(2),
            cap: Duration::from_millis(20),
            jitter: 0.2,
        },
        seed: 5,
    }
}

pub fn remote_backend(cfg: &BackendConfig, key: &str) -> Backend {
    Backend::Remote(RemoteClient::new(cfg, key.to_string()).unwrap())
}

/// `n` clickbait items whose texts carry their item number.
pub fn numbered_dataset(n: usize) -> Dataset {
    let task = TaskConfig::with_labels("Clickbait Detection", "news headlines", &["Clickbait", "Not clickbait"], "stub-model").unwrap();
    let items = (0..n)
        .map(|i| TextItem {
            id: format!("n{i:03}"),
            text: format!("headline item-{i} about the weather"),
            human_label: Label::new(if i % 3 == 0 { "Clickbait" } else { "Not clickbait" }).unwrap(),
        })
        .collect();
    Dataset { task, items }
}
