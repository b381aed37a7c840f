use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("item {item_id}: vector has {got} entries, table dim is {expected}")]
    DimensionMismatch { item_id: String, expected: usize, got: usize },
    #[error("item {0}: vector has a non-finite entry")]
    NonFinite(String),
    #[error("item {0}: embedded twice")]
    DuplicateId(String),
}

/// Item id to fixed-dimension vector. Rows are kept sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    provider: String,
    rows: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provider: impl Into<String>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(Self {
            dim,
            provider: provider.into(),
            rows: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, item_id: impl Into<String>, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        let item_id = item_id.into();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                item_id,
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(item_id));
        }
        if self.rows.contains_key(&item_id) {
            return Err(EmbeddingError::DuplicateId(item_id));
        }
        self.rows.insert(item_id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn get(&self, item_id: &str) -> Option<&[f64]> {
        self.rows.get(item_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}
