mod common;

use std::collections::HashSet;
use std::sync::{Arc, Barrier};

use annorater::store::*;
use annorater_core::{EmbeddingTable, Label, Violation};
use chrono::Utc;
use common::fixture;

fn parsed(id: &str, label: &str) -> AnnotationRecord {
    AnnotationRecord {
        item_id: id.into(),
        prompt: format!("prompt for {id}"),
        raw_response: Some(label.into()),
        parsed_label: Some(Label::new(label).unwrap()),
        status: RecordStatus::Parsed,
        failure_reason: None,
        model_name: "m".into(),
        attempt_count: 1,
        created_at: Utc::now(),
    }
}

#[test]
fn fixture_dataset_loads() {
    let ds = load_dataset(&fixture("clickbait_6.jsonl"), &fixture("clickbait_task.json")).unwrap();
    assert_eq!(ds.items.len(), 6);
    assert_eq!(ds.task.labels.len(), 2);
    let ds = load_dataset(&fixture("headlines_200.jsonl"), &fixture("clickbait_task.json")).unwrap();
    assert_eq!(ds.items.len(), 200);
}

#[test]
fn schema_errors_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    std::fs::write(&data, "{\"id\":\"a\",\"text\":\"t\",\"human_label\":\"Clickbait\"}\n{\"id\":\"b\",\"text\":\"t\"}\n").unwrap();
    match load_dataset(&data, &fixture("clickbait_task.json")) {
        Err(StoreError::Schema { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "human_label")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_gold_label_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    std::fs::write(&data, "{\"id\":\"a\",\"text\":\"t\",\"human_label\":\"Satire\"}\n").unwrap();
    match load_dataset(&data, &fixture("clickbait_task.json")) {
        Err(StoreError::Validation(v)) => assert_eq!(v, vec![Violation::UnknownLabel("a".into())]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_file_is_io() {
    let err = load_dataset(&fixture("nope.jsonl"), &fixture("clickbait_task.json")).unwrap_err();
    assert!(err.is_io());
}

#[test]
fn records_round_trip_and_omit_absent_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let a = parsed("a", "Clickbait");
    let b = AnnotationRecord {
        raw_response: None,
        parsed_label: None,
        status: RecordStatus::ApiError,
        failure_reason: Some("HTTP 503".into()),
        attempt_count: 4,
        ..parsed("b", "Clickbait")
    };
    append_record(&path, &a).unwrap();
    append_record(&path, &b).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let second = text.lines().nth(1).unwrap();
    assert!(!second.contains("raw_response") && !second.contains("parsed_label"));
    assert_eq!(read_records(&path).unwrap(), vec![a, b]);
}

#[test]
fn concurrent_writers_never_tear_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = Arc::new(dir.path().join("s.jsonl"));
    let barrier = Arc::new(Barrier::new(2));
    let handles: Vec<_> = ["x", "y"]
        .into_iter()
        .map(|who| {
            let (path, barrier) = (path.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                for i in 0..100 {
                    // each call opens its own handle, so locking is exercised
                    // exactly as between processes
                    append_record(&path, &parsed(&format!("{who}{i}"), "Clickbait")).unwrap();
                }
            })
        })
        .collect();
    handles.into_iter().for_each(|h| h.join().unwrap());
    let records = read_records(&path).unwrap();
    assert_eq!(records.len(), 200);
    let ids: HashSet<String> = records.iter().map(|r| r.item_id.clone()).collect();
    assert_eq!(ids.len(), 200);
    for who in ["x", "y"] {
        let order: Vec<usize> =
            records.iter().filter_map(|r| r.item_id.strip_prefix(who)).map(|n| n.parse().unwrap()).collect();
        assert_eq!(order, (0..100).collect::<Vec<_>>());
    }
}

#[test]
fn join_counts_every_outcome() {
    let ds = load_dataset(&fixture("clickbait_6.jsonl"), &fixture("clickbait_task.json")).unwrap();
    let unparsable = AnnotationRecord {
        parsed_label: None,
        status: RecordStatus::Unparsable,
        failure_reason: Some("no_label_found".into()),
        ..parsed("cb-2", "Clickbait")
    };
    let failed = AnnotationRecord {
        raw_response: None,
        parsed_label: None,
        status: RecordStatus::ApiError,
        failure_reason: Some("HTTP 500".into()),
        ..parsed("cb-3", "Clickbait")
    };
    let records = vec![parsed("cb-1", "clickbait"), unparsable, failed, parsed("cb-4", "Not clickbait")];
    let set = join_evaluation(&ds, &records).unwrap();
    assert_eq!(set.pairs.len(), 2);
    assert_eq!(set.pairs[0].model_label.raw(), "Clickbait");
    assert_eq!((set.n_unparsable, set.n_api_failed, set.n_missing), (1, 1, 2));

    let stray = vec![parsed("zz", "Clickbait")];
    assert!(matches!(join_evaluation(&ds, &stray), Err(StoreError::UnknownItemId(id)) if id == "zz"));
    let off_task = vec![parsed("cb-1", "Satire")];
    assert!(matches!(join_evaluation(&ds, &off_task), Err(StoreError::LabelMismatch { .. })));
}

#[test]
fn embeddings_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    let mut table = EmbeddingTable::new(3, "mock:1").unwrap();
    table.insert("b", vec![0.1, -2.5e-17, 1.0 / 3.0]).unwrap();
    table.insert("a", vec![f64::MIN_POSITIVE, 7.0, -0.0]).unwrap();
    write_embeddings(&path, &table).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), table);
    let first = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first, r#"{"dim":3,"provider":"mock:1"}"#);
}

#[test]
fn embedding_dimension_is_enforced_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    std::fs::write(&path, "{\"dim\":2,\"provider\":\"p\"}\n{\"id\":\"a\",\"vector\":[1.0]}\n").unwrap();
    assert!(matches!(load_embeddings(&path), Err(StoreError::Embedding { .. })));
}

#[test]
fn annotation_digest_ignores_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("p.jsonl"), dir.path().join("q.jsonl"));
    let a = parsed("a", "Clickbait");
    let mut later = a.clone();
    later.created_at = a.created_at + chrono::Duration::seconds(30);
    append_record(&p, &a).unwrap();
    append_record(&q, &later).unwrap();
    assert_eq!(annotation_digest(&p).unwrap().sha256, annotation_digest(&q).unwrap().sha256);
    assert_ne!(file_digest(&p, "x").unwrap().sha256, file_digest(&q, "x").unwrap().sha256);
}
