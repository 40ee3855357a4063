use std::collections::HashMap;
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::EmbeddingVector;
use crate::scalar::Scalar;

/// Content-addressed store of normalized vectors keyed by
/// `sha256(model_id, text bytes)`. Readers share; writers serialize.
#[derive(Debug, Default)]
pub struct EmbeddingCache<S> {
    entries: RwLock<HashMap<[u8; 32], EmbeddingVector<S>>>,
}

fn content_hash(model_id: &str, text: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((model_id.len() as u64).to_le_bytes());
    hasher.update(model_id.as_bytes());
    hasher.update(text.as_bytes());
    hasher.finalize().into()
}

impl<S: Scalar> EmbeddingCache<S> {
    pub fn new() -> Self {
        EmbeddingCache {
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, model_id: &str, text: &str) -> Option<EmbeddingVector<S>> {
        self.entries.read().unwrap().get(&content_hash(model_id, text)).cloned()
    }

    pub fn insert(&self, model_id: &str, text: &str, vector: EmbeddingVector<S>) {
        self.entries
            .write()
            .unwrap()
            .insert(content_hash(model_id, text), vector);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
