//! Externally computed sentence embeddings keyed by record id.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::features::SparseVec;
use super::ModelError;
use crate::ids::RecordId;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub source: String,
    pub dim: usize,
    pub vectors: BTreeMap<RecordId, Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    record_id: RecordId,
    vector: Vec<f64>,
}

/// Reads JSONL rows `{"record_id": ..., "vector": [...]}`. Blank lines are skipped.
pub fn ingest_embeddings(path: &Path) -> Result<EmbeddingTable, ModelError> {
    let file = std::fs::File::open(path)?;
    let mut vectors = BTreeMap::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| ModelError::EmbeddingParse {
            line: lineno,
            message: e.to_string(),
        })?;
        if row.vector.is_empty() || row.vector.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::EmbeddingParse {
                line: lineno,
                message: format!("vector for {} is empty or not finite", row.record_id),
            });
        }
        let expected = *dim.get_or_insert(row.vector.len());
        if row.vector.len() != expected {
            return Err(ModelError::RaggedEmbedding {
                line: lineno,
                record_id: row.record_id,
                expected,
                found: row.vector.len(),
            });
        }
        if vectors.insert(row.record_id.clone(), row.vector).is_some() {
            return Err(ModelError::EmbeddingParse {
                line: lineno,
                message: format!("duplicate record_id {}", row.record_id),
            });
        }
    }
    let dim = dim.ok_or(ModelError::EmptyEmbeddings)?;
    Ok(EmbeddingTable {
        source: path.display().to_string(),
        dim,
        vectors,
    })
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &RecordId) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    /// Warns about table rows whose id is not in `known` and returns their count.
    pub fn warn_unknown<'a>(&self, known: impl IntoIterator<Item = &'a RecordId>) -> usize {
        let known: HashSet<&RecordId> = known.into_iter().collect();
        let unknown = self.vectors.keys().filter(|id| !known.contains(id)).count();
        if unknown > 0 {
            tracing::warn!(unknown, source = %self.source, "embedding rows for unknown record ids");
        }
        unknown
    }

    /// Feature vectors for `ids`, failing on the first id without a row.
    pub fn features(&self, ids: &[RecordId]) -> Result<Vec<SparseVec>, ModelError> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .map(SparseVec::from_dense)
                    .ok_or_else(|| ModelError::MissingEmbedding(id.clone()))
            })
            .collect()
    }
}
