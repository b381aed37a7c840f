//! On-disk artifacts: datasets, task files, the append-only annotation
//! store and embedding tables.
//!
//! Every file is UTF-8 JSON, one record per line, except the task file,
//! which is a single JSON document.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use annorater_core::embedding::EmbeddingError;
use annorater_core::model::validate_dataset;
use annorater_core::report::InputDigest;
use annorater_core::{Dataset, EmbeddingTable, EvaluationPair, EvaluationSet, Label, TaskConfig, TextItem, Violation};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {field}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },
    #[error("dataset failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("invalid annotation record for item {item_id}: {message}")]
    InvalidRecord { item_id: String, message: String },
    #[error("annotation for unknown item {0}")]
    UnknownItemId(String),
    #[error("item {item_id}: label {label:?} is not in the task label set")]
    LabelMismatch { item_id: String, label: String },
    #[error("{path}: {source}")]
    Embedding { path: PathBuf, source: EmbeddingError },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn schema(path: &Path, line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        StoreError::Schema {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the environment rather than of the content.
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io { .. })
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))
}

pub fn load_task(path: &Path) -> Result<TaskConfig> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map_or_else(|| "document".to_string(), str::to_string);
        StoreError::schema(path, e.line(), field, msg)
    })
}

/// Reads dataset rows without checking them against a task.
pub fn load_items(path: &Path) -> Result<Vec<TextItem>> {
    let text = read_text(path)?;
    let mut items = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| StoreError::schema(path, line_no, "line", e.to_string()))?;
        let field = |name: &str| -> Result<String> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(StoreError::schema(path, line_no, name, "expected a string")),
                None => Err(StoreError::schema(path, line_no, name, "missing field")),
            }
        };
        let (id, text, human_label) = (field("id")?, field("text")?, field("human_label")?);
        let human_label =
            Label::new(human_label).map_err(|e| StoreError::schema(path, line_no, "human_label", e.to_string()))?;
        items.push(TextItem { id, text, human_label });
    }
    Ok(items)
}

/// Loads a dataset and its task file and checks every invariant.
pub fn load_dataset(dataset_path: &Path, task_path: &Path) -> Result<Dataset> {
    let task = load_task(task_path)?;
    let items = load_items(dataset_path)?;
    let dataset = Dataset { task, items };
    let violations = validate_dataset(&dataset);
    if violations.is_empty() {
        Ok(dataset)
    } else {
        Err(StoreError::Validation(violations))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Parsed,
    Unparsable,
    ApiError,
}

/// Outcome of annotating one item. Absent fields are omitted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed_label: Option<Label>,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    pub model_name: String,
    pub attempt_count: u32,
    pub created_at: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| {
            Err(StoreError::InvalidRecord {
                item_id: self.item_id.clone(),
                message: message.to_string(),
            })
        };
        if self.attempt_count < 1 {
            return bad("attempt_count must be at least 1");
        }
        match self.status {
            RecordStatus::Parsed if self.parsed_label.is_none() => bad("status parsed without parsed_label"),
            RecordStatus::Parsed if self.raw_response.is_none() => bad("status parsed without raw_response"),
            RecordStatus::Unparsable | RecordStatus::ApiError if self.parsed_label.is_some() => {
                bad("parsed_label present on an unparsed record")
            }
            RecordStatus::Unparsable if self.raw_response.is_none() => bad("status unparsable without raw_response"),
            RecordStatus::ApiError if self.raw_response.is_some() => bad("status api_error with raw_response"),
            _ => Ok(()),
        }
    }

    /// True once the item needs no further requests.
    pub fn is_final(&self) -> bool {
        self.status != RecordStatus::ApiError
    }
}

fn open_locked_for_append(path: &Path) -> Result<File> {
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| StoreError::io(path, e))?;
    file.lock().map_err(|e| StoreError::io(path, e))?;
    drop_torn_tail(&mut file).map_err(|e| StoreError::io(path, e))?;
    Ok(file)
}

/// Truncates bytes after the last newline: a write that never completed.
fn drop_torn_tail(file: &mut File) -> io::Result<()> {
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut last = [0u8; 1];
    file.seek(SeekFrom::Start(len - 1))?;
    file.read_exact(&mut last)?;
    if last[0] == b'\n' {
        return Ok(());
    }
    let mut contents = Vec::new();
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut contents)?;
    let keep = contents.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    file.set_len(keep as u64)?;
    Ok(())
}

fn write_record(file: &mut File, path: &Path, record: &AnnotationRecord) -> Result<()> {
    record.validate()?;
    let mut line = serde_json::to_string(record).expect("records always serialize");
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| StoreError::io(path, e))?;
    file.sync_data().map_err(|e| StoreError::io(path, e))
}

/// Appends one record as a single line under an exclusive lock.
pub fn append_record(store_path: &Path, record: &AnnotationRecord) -> Result<()> {
    record.validate()?;
    let mut file = open_locked_for_append(store_path)?;
    write_record(&mut file, store_path, record)
}

/// Holds the store's exclusive lock for the lifetime of a job.
pub struct StoreWriter {
    path: PathBuf,
    file: File,
}

impl StoreWriter {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            file: open_locked_for_append(path)?,
        })
    }

    pub fn append(&mut self, record: &AnnotationRecord) -> Result<()> {
        write_record(&mut self.file, &self.path, record)
    }

    /// Records already in the store, read through the held lock.
    pub fn records(&mut self) -> Result<Vec<AnnotationRecord>> {
        let mut text = String::new();
        self.file.seek(SeekFrom::Start(0)).map_err(|e| StoreError::io(&self.path, e))?;
        self.file
            .read_to_string(&mut text)
            .map_err(|e| StoreError::io(&self.path, e))?;
        parse_records(&self.path, &text)
    }
}

/// Every record in file order. A final line without a newline is an
/// interrupted write and is ignored if it does not parse.
pub fn read_records(store_path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = File::open(store_path).map_err(|e| StoreError::io(store_path, e))?;
    file.lock_shared().map_err(|e| StoreError::io(store_path, e))?;
    let mut text = String::new();
    BufReader::new(&file)
        .read_to_string(&mut text)
        .map_err(|e| StoreError::io(store_path, e))?;
    parse_records(store_path, &text)
}

fn parse_records(store_path: &Path, text: &str) -> Result<Vec<AnnotationRecord>> {
    let terminated = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let is_tail = n + 1 == lines.len() && !terminated;
        match serde_json::from_str::<AnnotationRecord>(line) {
            Ok(rec) => {
                rec.validate().map_err(|e| StoreError::schema(store_path, n + 1, "record", e.to_string()))?;
                out.push(rec);
            }
            Err(_) if is_tail => {}
            Err(e) => return Err(StoreError::schema(store_path, n + 1, "record", e.to_string())),
        }
    }
    Ok(out)
}

/// The latest record per item, ordered by each item's first appearance.
pub fn load_annotations(store_path: &Path) -> Result<Vec<AnnotationRecord>> {
    Ok(latest_per_item(read_records(store_path)?))
}

pub fn latest_per_item(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<AnnotationRecord> = Vec::new();
    for rec in records {
        match slot.get(&rec.item_id) {
            Some(&i) => out[i] = rec,
            None => {
                slot.insert(rec.item_id.clone(), out.len());
                out.push(rec);
            }
        }
    }
    out
}

/// Pairs gold labels with parsed model labels; everything else is counted.
pub fn join_evaluation(dataset: &Dataset, records: &[AnnotationRecord]) -> Result<EvaluationSet> {
    let known: HashMap<&str, &TextItem> = dataset.items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut by_id: HashMap<&str, &AnnotationRecord> = HashMap::new();
    for rec in records {
        if !known.contains_key(rec.item_id.as_str()) {
            return Err(StoreError::UnknownItemId(rec.item_id.clone()));
        }
        by_id.insert(rec.item_id.as_str(), rec);
    }

    let task = &dataset.task;
    let mut set = EvaluationSet {
        task: task.clone(),
        pairs: Vec::new(),
        n_unparsable: 0,
        n_api_failed: 0,
        n_missing: 0,
    };
    for item in &dataset.items {
        let Some(rec) = by_id.get(item.id.as_str()) else {
            set.n_missing += 1;
            continue;
        };
        match rec.status {
            RecordStatus::Parsed => {
                let raw = rec.parsed_label.as_ref().expect("validated record");
                let mismatch = || StoreError::LabelMismatch {
                    item_id: item.id.clone(),
                    label: raw.raw().to_string(),
                };
                let model_label = task.labels[task.label_index(raw).ok_or_else(mismatch)?].clone();
                let human_label = task.labels[task.label_index(&item.human_label).ok_or_else(mismatch)?].clone();
                set.pairs.push(EvaluationPair {
                    item_id: item.id.clone(),
                    human_label,
                    model_label,
                });
            }
            RecordStatus::Unparsable => set.n_unparsable += 1,
            RecordStatus::ApiError => set.n_api_failed += 1,
        }
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingHeader {
    dim: usize,
    provider: String,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    id: String,
    vector: Vec<f64>,
}

/// Header line with `dim` and `provider`, then one row per item sorted by id.
pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = EmbeddingHeader {
        dim: table.dim(),
        provider: table.provider().to_string(),
    };
    let mut emit = |line: String| writeln!(w, "{line}").map_err(|e| StoreError::io(path, e));
    emit(serde_json::to_string(&header).expect("header serializes"))?;
    for (id, vector) in table.iter() {
        let row = EmbeddingRow {
            id: id.to_string(),
            vector: vector.to_vec(),
        };
        emit(serde_json::to_string(&row).expect("row serializes"))?;
    }
    let file = w.into_inner().map_err(|e| StoreError::io(path, e.into_error()))?;
    file.sync_all().map_err(|e| StoreError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: EmbeddingHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| StoreError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| StoreError::schema(path, 1, "header", e.to_string()))?
        }
        None => return Err(StoreError::schema(path, 1, "header", "empty embedding file")),
    };
    let mut table = EmbeddingTable::new(header.dim, header.provider).map_err(|source| StoreError::Embedding {
        path: path.to_path_buf(),
        source,
    })?;
    for (n, line) in lines {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow =
            serde_json::from_str(&line).map_err(|e| StoreError::schema(path, n + 1, "row", e.to_string()))?;
        table.insert(row.id, row.vector).map_err(|source| StoreError::Embedding {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(table)
}

/// SHA-256 of a file's bytes, keyed by file name rather than full path so
/// the same inputs in different directories give the same report.
pub fn file_digest(path: &Path, role: &str) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    Ok(digest_entry(path, role, &bytes))
}

/// Digest of an annotation store with `created_at` removed from every
/// record, so re-running a deterministic job yields the same digest.
pub fn annotation_digest(path: &Path) -> Result<InputDigest> {
    let records = read_records(path)?;
    let mut canonical = Vec::new();
    for rec in &records {
        let mut value = serde_json::to_value(rec).expect("records serialize");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("created_at");
        }
        canonical.extend(serde_json::to_vec(&value).expect("values serialize"));
        canonical.push(b'\n');
    }
    Ok(digest_entry(path, "annotations", &canonical))
}

fn digest_entry(path: &Path, role: &str, bytes: &[u8]) -> InputDigest {
    InputDigest {
        role: role.to_string(),
        name: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}
