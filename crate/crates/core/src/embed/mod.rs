//! Embedding vectors, the backend contract, batching and caching.

mod cache;
mod mock;
mod openai;

pub use cache::EmbeddingCache;
pub use mock::{mock_embed, MockEmbedder, DEFAULT_MOCK_DIMENSION};
pub use openai::OpenAiEmbeddingClient;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::llm::BackendError;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("nothing to embed")]
    EmptyInput,
    #[error("text {0} is empty")]
    EmptyText(usize),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("backend returned {actual} vectors for {expected} texts")]
    CountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A dense vector tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
    model_id: String,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>, model_id: impl Into<String>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn from_f64(values: &[f64], model_id: impl Into<String>) -> Result<Self, EmbedError> {
        Self::new(values.iter().map(|&v| S::from_f64_lossy(v)).collect(), model_id)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| {
                let v = v.to_f64_lossless();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product accumulated in `f64`, summed in index order.
    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.bits() == b.bits())
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc + x.to_f64_lossless() * y.to_f64_lossless())
}

/// Scales `v` to unit L2 norm.
pub fn normalize_vector<S: Scalar>(v: &EmbeddingVector<S>) -> Result<EmbeddingVector<S>, EmbedError> {
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    let values = v
        .values
        .iter()
        .map(|x| S::from_f64_lossy(x.to_f64_lossless() / norm))
        .collect();
    Ok(EmbeddingVector {
        values,
        model_id: v.model_id.clone(),
    })
}

/// Produces raw (not necessarily normalized) vectors for a batch of texts.
pub trait EmbeddingBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Output dimension when known up front.
    fn dimension(&self) -> Option<usize> {
        None
    }

    /// One vector per input, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for std::sync::Arc<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed_batch(texts)
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Embeds `texts`, returning unit vectors in input order.
///
/// The cache is consulted first; only distinct cache misses reach the
/// backend, in batches of at most `batch_size`.
pub fn embed_texts<S: Scalar, T: AsRef<str>>(
    texts: &[T],
    backend: &dyn EmbeddingBackend,
    cache: &EmbeddingCache<S>,
    batch_size: usize,
) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    if let Some(i) = texts.iter().position(|t| t.as_ref().is_empty()) {
        return Err(EmbedError::EmptyText(i));
    }
    let model = backend.model_id().to_string();
    let mut expected_dim = backend.dimension();

    let mut resolved: HashMap<&str, EmbeddingVector<S>> = HashMap::new();
    let mut misses: Vec<&str> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for text in texts {
        let text = text.as_ref();
        if !seen.insert(text) {
            continue;
        }
        match cache.get(&model, text) {
            Some(v) => {
                resolved.insert(text, v);
            }
            None => misses.push(text),
        }
    }

    for batch in misses.chunks(batch_size.max(1)) {
        let owned: Vec<String> = batch.iter().map(|s| s.to_string()).collect();
        let raw = backend.embed_batch(&owned)?;
        if raw.len() != batch.len() {
            return Err(EmbedError::CountMismatch {
                expected: batch.len(),
                actual: raw.len(),
            });
        }
        for (text, values) in batch.iter().zip(raw) {
            let expected = *expected_dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    expected,
                    actual: values.len(),
                });
            }
            let unit = normalize_raw(&values, &model)?;
            cache.insert(&model, text, unit.clone());
            resolved.insert(text, unit);
        }
    }

    texts
        .iter()
        .map(|t| {
            let v = resolved[t.as_ref()].clone();
            match expected_dim {
                Some(expected) if v.dimension() != expected => Err(EmbedError::DimensionMismatch {
                    expected,
                    actual: v.dimension(),
                }),
                _ => Ok(v),
            }
        })
        .collect()
}

/// Normalizes in `f64` before narrowing to the storage scalar.
pub(crate) fn normalize_raw<S: Scalar>(values: &[f64], model: &str) -> Result<EmbeddingVector<S>, EmbedError> {
    let wide = EmbeddingVector::<f64>::new(values.to_vec(), model)?;
    let unit = normalize_vector(&wide)?;
    EmbeddingVector::from_f64(unit.values(), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec64(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(values.to_vec(), "t").unwrap()
    }

    #[test]
    fn normalizes_three_four_five() {
        let unit = normalize_vector(&vec64(&[3.0, 4.0])).unwrap();
        assert!((unit.values()[0] - 0.6).abs() < 1e-15);
        assert!((unit.values()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(matches!(
            normalize_vector(&vec64(&[0.0, 0.0])),
            Err(EmbedError::ZeroVector)
        ));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(matches!(
            EmbeddingVector::<f32>::new(vec![f32::NAN], "t"),
            Err(EmbedError::NonFinite)
        ));
    }

    #[test]
    fn normalization_is_idempotent_on_unit_vectors() {
        let unit = vec64(&[0.6, 0.8]);
        let again = normalize_vector(&unit).unwrap();
        for (a, b) in unit.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_texts_hit_backend_once() {
        let backend = MockEmbedder::new(DEFAULT_MOCK_DIMENSION);
        let cache = EmbeddingCache::<f32>::new();
        let out = embed_texts(&["a", "a"], &backend, &cache, DEFAULT_BATCH_SIZE).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].bit_eq(&out[1]));
        assert_eq!(backend.batch_sizes(), vec![1]);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let backend = MockEmbedder::new(8);
        let cache = EmbeddingCache::<f64>::new();
        let none: [&str; 0] = [];
        assert!(matches!(
            embed_texts(&none, &backend, &cache, 4),
            Err(EmbedError::EmptyInput)
        ));
        assert!(matches!(
            embed_texts(&["x", ""], &backend, &cache, 4),
            Err(EmbedError::EmptyText(1))
        ));
        assert_eq!(backend.call_count(), 0);
    }

    #[test]
    fn hundred_texts_in_batches_of_sixteen() {
        let backend = MockEmbedder::new(32);
        let cache = EmbeddingCache::<f32>::new();
        let texts: Vec<String> = (0..100).map(|i| format!("text number {i}")).collect();
        let out = embed_texts(&texts, &backend, &cache, 16).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(backend.call_count(), 7);
        assert_eq!(backend.batch_sizes(), vec![16, 16, 16, 16, 16, 16, 4]);
        for v in &out {
            assert!((v.norm() - 1.0).abs() <= 1e-6);
        }
        // second pass is served entirely from cache
        embed_texts(&texts, &backend, &cache, 16).unwrap();
        assert_eq!(backend.call_count(), 7);
    }

    struct Ragged;

    impl EmbeddingBackend for Ragged {
        fn model_id(&self) -> &str {
            "ragged"
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
            Ok(texts.iter().map(|t| vec![1.0; t.len()]).collect())
        }
    }

    struct Short;

    impl EmbeddingBackend for Short {
        fn model_id(&self) -> &str {
            "short"
        }

        fn embed_batch(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
            Ok(vec![vec![1.0, 0.0]])
        }
    }

    #[test]
    fn inconsistent_backend_output_is_an_error() {
        let cache = EmbeddingCache::<f64>::new();
        assert!(matches!(
            embed_texts(&["ab", "abc"], &Ragged, &cache, 8),
            Err(EmbedError::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(
            embed_texts(&["a", "b"], &Short, &cache, 8),
            Err(EmbedError::CountMismatch { expected: 2, actual: 1 })
        ));
    }

    proptest! {
        #[test]
        fn output_order_follows_input(texts in prop::collection::vec("[a-z ]{1,12}", 1..20), seed in any::<u64>()) {
            let backend = MockEmbedder::new(16);
            let cache = EmbeddingCache::<f64>::new();
            let forward = embed_texts(&texts, &backend, &cache, 3).unwrap();
            let mut order: Vec<usize> = (0..texts.len()).collect();
            // cheap deterministic shuffle
            order.sort_by_key(|i| (*i as u64).wrapping_mul(seed | 1).rotate_left(17));
            let permuted: Vec<&String> = order.iter().map(|&i| &texts[i]).collect();
            let cold = EmbeddingCache::<f64>::new();
            let shuffled = embed_texts(&permuted, &backend, &cold, 5).unwrap();
            for (pos, &i) in order.iter().enumerate() {
                prop_assert!(shuffled[pos].bit_eq(&forward[i]));
                // re-normalization may move the last bit
                prop_assert!((forward[i].dot(&mock_embed::<f64>(&texts[i], 16)) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn warm_cache_is_transparent(texts in prop::collection::vec("\\PC{1,20}", 1..12)) {
            let backend = MockEmbedder::new(24);
            let cache = EmbeddingCache::<f32>::new();
            let cold = embed_texts(&texts, &backend, &cache, 4).unwrap();
            let warm = embed_texts(&texts, &backend, &cache, 4).unwrap();
            for (a, b) in cold.iter().zip(&warm) {
                prop_assert!(a.bit_eq(b));
            }
        }
    }
}
