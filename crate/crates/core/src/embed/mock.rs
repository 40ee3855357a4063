//! Deterministic offline embedder based on hashed character 3-grams.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{EmbeddingBackend, EmbeddingVector};
use crate::llm::BackendError;
use crate::scalar::Scalar;

pub const DEFAULT_MOCK_DIMENSION: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn mock_model_id(dimension: usize) -> String {
    format!("mock-trigram-{dimension}")
}

/// Signed bucket counts of the lowercased text's character 3-grams,
/// normalized to unit length.
///
/// Each 3-gram is FNV-1a hashed; the bucket is `hash % d` and the top bit
/// picks the sign. Texts shorter than three characters count as a single
/// gram. Empty text, and the rare text whose counts cancel to zero, map to
/// the first basis vector.
pub fn mock_embed<S: Scalar>(text: &str, dimension: usize) -> EmbeddingVector<S> {
    assert!(dimension >= 2, "mock embedding dimension must be at least 2");
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut counts = vec![0.0f64; dimension];

    let mut add = |gram: &str| {
        let h = fnv1a(gram.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        counts[(h % dimension as u64) as usize] += sign;
    };
    if chars.len() < 3 {
        if !chars.is_empty() {
            add(&lowered);
        }
    } else {
        let mut gram = String::with_capacity(12);
        for window in chars.windows(3) {
            gram.clear();
            gram.extend(window);
            add(&gram);
        }
    }

    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        counts.iter_mut().for_each(|c| *c = 0.0);
        counts[0] = 1.0;
    } else {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    EmbeddingVector::from_f64(&counts, mock_model_id(dimension)).expect("finite by construction")
}

/// [`mock_embed`] behind the backend trait, with call accounting.
#[derive(Debug)]
pub struct MockEmbedder {
    dimension: usize,
    model_id: String,
    calls: AtomicUsize,
    batches: Mutex<Vec<usize>>,
}

impl MockEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 2, "mock embedding dimension must be at least 2");
        MockEmbedder {
            dimension,
            model_id: mock_model_id(dimension),
            calls: AtomicUsize::new(0),
            batches: Mutex::new(Vec::new()),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Size of each batch received, in call order.
    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.lock().unwrap().clone()
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_MOCK_DIMENSION)
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.batches.lock().unwrap().push(texts.len());
        Ok(texts
            .iter()
            .map(|t| mock_embed::<f64>(t, self.dimension).values().to_vec())
            .collect())
    }
}
