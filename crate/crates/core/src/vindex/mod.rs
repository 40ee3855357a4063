//! Exact flat vector store with inner-product (cosine) search.
//!
//! [`VectorIndex::search_topk`] keeps a bounded heap over a single scan;
//! [`brute_force_topk`] scores and fully sorts every entry and serves as the
//! reference it is checked against.

mod chunk;
mod persist;

pub use chunk::{chunk_document, Chunk, ChunkId, ChunkingConfig};
pub use persist::{load_index, save_index, INDEX_MAGIC};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{dot, EmbeddingVector};
use crate::scalar::Scalar;

/// Entries must be unit length within this tolerance.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index dimension must be at least 1")]
    ZeroDimension,
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("chunk id {0} is already indexed")]
    DuplicateChunkId(ChunkId),
    #[error("vector for {chunk_id} has norm {norm}, expected 1")]
    NotNormalized { chunk_id: ChunkId, norm: f64 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: ChunkId,
    pub score: f64,
}

/// Row-major store of unit vectors with their chunk ids.
#[derive(Debug, Clone)]
pub struct VectorIndex<S> {
    dimension: usize,
    ids: Vec<ChunkId>,
    data: Vec<S>,
    id_set: HashSet<ChunkId>,
}

impl<S: Scalar> VectorIndex<S> {
    pub fn new(dimension: usize) -> Result<Self, IndexError> {
        if dimension == 0 {
            return Err(IndexError::ZeroDimension);
        }
        Ok(VectorIndex {
            dimension,
            ids: Vec::new(),
            data: Vec::new(),
            id_set: HashSet::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &ChunkId) -> bool {
        self.id_set.contains(id)
    }

    pub fn vector(&self, position: usize) -> &[S] {
        &self.data[position * self.dimension..(position + 1) * self.dimension]
    }

    pub fn get(&self, id: &ChunkId) -> Option<&[S]> {
        self.ids.iter().position(|x| x == id).map(|i| self.vector(i))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ChunkId, &[S])> {
        self.ids.iter().zip(self.data.chunks_exact(self.dimension))
    }

    /// Appends a batch. The batch is validated as a whole first, so a failed
    /// call leaves the index unchanged.
    pub fn add_vectors(
        &mut self,
        items: impl IntoIterator<Item = (ChunkId, EmbeddingVector<S>)>,
    ) -> Result<(), IndexError> {
        let items: Vec<_> = items.into_iter().collect();
        let mut batch_ids = HashSet::with_capacity(items.len());
        for (id, v) in &items {
            self.check_vector(id, v.values())?;
            if self.id_set.contains(id) || !batch_ids.insert(id) {
                return Err(IndexError::DuplicateChunkId(id.clone()));
            }
        }
        self.data.reserve(items.len() * self.dimension);
        for (id, v) in items {
            self.data.extend_from_slice(v.values());
            self.id_set.insert(id.clone());
            self.ids.push(id);
        }
        Ok(())
    }

    fn check_vector(&self, id: &ChunkId, values: &[S]) -> Result<(), IndexError> {
        if values.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: values.len(),
            });
        }
        let norm = dot(values, values).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(IndexError::NotNormalized {
                chunk_id: id.clone(),
                norm,
            });
        }
        Ok(())
    }

    /// Exact top-k by inner product; ties go to the smaller chunk id.
    pub fn search_topk(&self, query: &EmbeddingVector<S>, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.check_query(query, k)?;
        let q = query.values();
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for (position, row) in self.data.chunks_exact(self.dimension).enumerate() {
            let candidate = Candidate {
                score: dot(row, q),
                id: &self.ids[position],
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if let Some(worst) = heap.peek() {
                if candidate < *worst {
                    heap.pop();
                    heap.push(candidate);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| SearchHit {
                chunk_id: c.id.clone(),
                score: c.score,
            })
            .collect())
    }

    fn check_query(&self, query: &EmbeddingVector<S>, k: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        Ok(())
    }

    /// Bitwise equality of dimension, ids and vector payload.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.ids == other.ids
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.bits() == b.bits())
    }
}

/// Heap element ordered so that the *worse* hit compares greater.
struct Candidate<'a> {
    score: f64,
    id: &'a ChunkId,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Reference search: score everything, sort, truncate.
pub fn brute_force_topk<S: Scalar>(
    entries: &[(ChunkId, EmbeddingVector<S>)],
    query: &EmbeddingVector<S>,
    k: usize,
) -> Result<Vec<SearchHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if entries.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    let mut hits = Vec::with_capacity(entries.len());
    for (id, v) in entries {
        if v.dimension() != query.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: v.dimension(),
                actual: query.dimension(),
            });
        }
        let mut score = 0.0f64;
        for (a, b) in v.values().iter().zip(query.values()) {
            score += a.to_f64_lossless() * b.to_f64_lossless();
        }
        hits.push(SearchHit {
            chunk_id: id.clone(),
            score,
        });
    }
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    hits.truncate(k);
    Ok(hits)
}
