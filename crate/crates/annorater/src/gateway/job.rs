use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use annorater_core::parse::{parse_response, ParseOutcome};
use annorater_core::prompt::render_prompt;
use annorater_core::{Dataset, EmbeddingTable, TextItem};
use chrono::Utc;
use futures::stream::{self, StreamExt, TryStreamExt};
use serde::Serialize;

use super::{mock_embed, Backend, BackendConfig, Completion, GatewayError};
use crate::store::{AnnotationRecord, RecordStatus, StoreWriter};

/// Inputs per embeddings request.
pub const EMBED_BATCH: usize = 64;

/// Final state of every dataset item after a job, plus what this run did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSummary {
    pub n_parsed: usize,
    pub n_unparsable: usize,
    pub n_api_failed: usize,
    /// Items sent to the backend by this run.
    pub n_submitted: usize,
    /// Requests issued by this run, retries included.
    pub requests: u64,
    pub max_in_flight: usize,
    pub elapsed: Duration,
}

/// Tracks requests in flight and the peak.
#[derive(Default)]
struct InFlight {
    now: AtomicUsize,
    peak: AtomicUsize,
}

impl InFlight {
    fn enter(&self) {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.now.fetch_sub(1, Ordering::SeqCst);
    }
}

fn record_for(item: &TextItem, prompt: String, outcome: Result<Completion, GatewayError>, dataset: &Dataset, cfg: &BackendConfig) -> Result<AnnotationRecord, GatewayError> {
    let mut rec = AnnotationRecord {
        item_id: item.id.clone(),
        prompt,
        raw_response: None,
        parsed_label: None,
        status: RecordStatus::ApiError,
        failure_reason: None,
        model_name: cfg.model_name.clone(),
        attempt_count: 1,
        created_at: Utc::now(),
    };
    match outcome {
        Ok(c) => {
            rec.attempt_count = c.attempts;
            match parse_response(&c.content, &dataset.task.labels) {
                ParseOutcome::Parsed { label } => {
                    rec.status = RecordStatus::Parsed;
                    rec.parsed_label = Some(label);
                }
                ParseOutcome::Unparsable { reason } => {
                    rec.status = RecordStatus::Unparsable;
                    rec.failure_reason = Some(reason.as_str().to_string());
                }
            }
            rec.raw_response = Some(c.content);
        }
        Err(GatewayError::ApiFailure { cause, attempts }) => {
            rec.attempt_count = attempts.max(1);
            rec.failure_reason = Some(cause);
        }
        Err(other) => return Err(other),
    }
    Ok(rec)
}

/// Annotates every item lacking a parsed or unparsable record, appending
/// outcomes to the store in dataset order. Per-item API failures become
/// `api_error` records; authentication and store failures abort.
pub async fn run_annotation_job(dataset: &Dataset, backend: &Backend, cfg: &BackendConfig, store_path: &Path) -> Result<JobSummary, GatewayError> {
    cfg.validate()?;
    let started = Instant::now();
    let requests_before = backend.request_count();
    let mut writer = StoreWriter::open(store_path)?;
    let latest: HashMap<String, RecordStatus> =
        writer.records()?.into_iter().map(|r| (r.item_id, r.status)).collect();

    let mut summary = JobSummary {
        n_parsed: 0,
        n_unparsable: 0,
        n_api_failed: 0,
        n_submitted: 0,
        requests: 0,
        max_in_flight: 0,
        elapsed: Duration::ZERO,
    };
    let mut tally = |status: RecordStatus| match status {
        RecordStatus::Parsed => summary.n_parsed += 1,
        RecordStatus::Unparsable => summary.n_unparsable += 1,
        RecordStatus::ApiError => summary.n_api_failed += 1,
    };

    let mut pending = Vec::new();
    for (index, item) in dataset.items.iter().enumerate() {
        match latest.get(&item.id) {
            Some(&status) if status != RecordStatus::ApiError => tally(status),
            _ => pending.push((index, item, render_prompt(&dataset.task, item)?)),
        }
    }
    let n_submitted = pending.len();

    let in_flight = InFlight::default();
    let mut outcomes = stream::iter(pending)
        .map(|(index, item, prompt)| {
            let in_flight = &in_flight;
            async move {
                in_flight.enter();
                let outcome = backend.complete(&prompt, index as u64).await;
                in_flight.leave();
                record_for(item, prompt.text, outcome, dataset, cfg)
            }
        })
        .buffered(cfg.concurrency);
    while let Some(rec) = outcomes.next().await {
        let rec = rec?;
        writer.append(&rec)?;
        tally(rec.status);
    }
    drop(outcomes);

    summary.n_submitted = n_submitted;
    summary.requests = backend.request_count() - requests_before;
    summary.max_in_flight = in_flight.peak.load(Ordering::SeqCst);
    summary.elapsed = started.elapsed();
    Ok(summary)
}

/// One vector per item. Mock backends need `dim`; remote results are
/// checked against `dim` when given, otherwise against the first vector.
pub async fn embed_batch(items: &[TextItem], backend: &Backend, cfg: &BackendConfig, dim: Option<usize>) -> Result<EmbeddingTable, GatewayError> {
    cfg.validate()?;
    let provider = backend.provider(cfg);
    match backend {
        Backend::Mock(_) => {
            let dim = dim.ok_or_else(|| GatewayError::Config("mock embeddings need a dimension".into()))?;
            let mut table = EmbeddingTable::new(dim, provider)?;
            for item in items {
                table.insert(item.id.clone(), mock_embed(&item.text, dim, cfg.seed))?;
            }
            Ok(table)
        }
        Backend::Remote(client) => {
            let batches: Vec<Vec<f64>> = stream::iter(items.chunks(EMBED_BATCH).enumerate())
                .map(|(b, chunk)| async move {
                    let texts: Vec<String> = chunk.iter().map(|i| i.text.clone()).collect();
                    client.embed(&texts, b as u64).await
                })
                .buffered(cfg.concurrency)
                .map_ok(|vs| stream::iter(vs.into_iter().map(Ok::<_, GatewayError>)))
                .try_flatten()
                .try_collect()
                .await?;
            let expected = dim.or_else(|| batches.first().map(Vec::len)).unwrap_or(1);
            if let Some(bad) = batches.iter().find(|v| v.len() != expected) {
                return Err(GatewayError::DimensionMismatch {
                    expected,
                    got: bad.len(),
                });
            }
            let mut table = EmbeddingTable::new(expected, provider)?;
            for (item, v) in items.iter().zip(batches) {
                table.insert(item.id.clone(), v)?;
            }
            Ok(table)
        }
    }
}
