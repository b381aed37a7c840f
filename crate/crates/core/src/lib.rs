//! Benchmarking LLM text annotation against human gold labels, and
//! predicting per item whether the LLM will agree with the human.
//!
//! This crate is pure computation with no I/O, so it also builds for
//! `wasm32` with `default-features = false`.

pub mod embedding;
pub mod metrics;
pub mod model;
pub mod parse;
pub mod prompt;
pub mod rater;
pub mod report;

pub use embedding::EmbeddingTable;
pub use model::{Dataset, EvaluationPair, EvaluationSet, Label, TaskConfig, TextItem, Violation};
