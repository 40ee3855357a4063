//! The searchable form of a corpus: chunk records plus their vector index.
//!
//! On disk this is `index/vectors.pcix` (see [`crate::vindex::save_index`])
//! and `index/chunks.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CitationKey, Corpus, CorpusError, DocId};
use crate::embed::{embed_texts, EmbedError, EmbeddingBackend, EmbeddingCache};
use crate::scalar::Scalar;
use crate::vindex::{chunk_document, load_index, save_index, Chunk, ChunkId, ChunkingConfig, IndexError, VectorIndex};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("index has not been built")]
    NotBuilt,
    #[error("index metadata is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ChunkRecord {
    #[serde(flatten)]
    chunk: Chunk,
    citation_key: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChunkFile {
    embedding_model: String,
    dimension: usize,
    chunks: Vec<ChunkRecord>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase<S> {
    index: VectorIndex<S>,
    chunks: BTreeMap<ChunkId, Chunk>,
    doc_keys: BTreeMap<DocId, CitationKey>,
    embedding_model: String,
}

impl<S: Scalar> KnowledgeBase<S> {
    /// Chunks and embeds the retrieval version of every document.
    pub fn build(
        corpus: &Corpus,
        embedder: &dyn EmbeddingBackend,
        cache: &EmbeddingCache<S>,
        chunking: &ChunkingConfig,
        batch_size: usize,
    ) -> Result<Self, KnowledgeError> {
        let docs = corpus.retrieval_documents();
        if docs.is_empty() {
            return Err(KnowledgeError::EmptyCorpus);
        }
        let mut chunks = Vec::new();
        let mut doc_keys = BTreeMap::new();
        for doc in docs {
            doc_keys.insert(doc.doc_id().clone(), doc.citation_key().clone());
            chunks.extend(chunk_document(doc, chunking));
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = embed_texts(&texts, embedder, cache, batch_size)?;
        let dimension = vectors[0].dimension();
        let mut index = VectorIndex::new(dimension)?;
        index.add_vectors(chunks.iter().map(|c| c.chunk_id.clone()).zip(vectors))?;
        Ok(KnowledgeBase {
            index,
            chunks: chunks.into_iter().map(|c| (c.chunk_id.clone(), c)).collect(),
            doc_keys,
            embedding_model: embedder.model_id().to_string(),
        })
    }

    pub fn index(&self) -> &VectorIndex<S> {
        &self.index
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn citation_key(&self, doc: &DocId) -> Option<&CitationKey> {
        self.doc_keys.get(doc)
    }

    pub fn citation_keys(&self) -> impl Iterator<Item = &CitationKey> {
        self.doc_keys.values()
    }

    pub fn embedding_model(&self) -> &str {
        &self.embedding_model
    }

    fn paths(dir: &Path) -> (PathBuf, PathBuf) {
        let index_dir = dir.join("index");
        (index_dir.join("vectors.pcix"), index_dir.join("chunks.json"))
    }

    /// Writes `dir/index/vectors.pcix` and `dir/index/chunks.json`.
    pub fn save(&self, dir: &Path) -> Result<(), KnowledgeError> {
        let (vectors_path, chunks_path) = Self::paths(dir);
        let parent = vectors_path.parent().expect("has parent");
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
        fs::write(&vectors_path, save_index(&self.index)).map_err(|e| CorpusError::io(&vectors_path, e))?;
        let file = ChunkFile {
            embedding_model: self.embedding_model.clone(),
            dimension: self.index.dimension(),
            chunks: self
                .chunks
                .values()
                .map(|c| ChunkRecord {
                    chunk: c.clone(),
                    citation_key: self.doc_keys[&c.doc_id].to_string(),
                })
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&file).expect("chunk file serializes");
        fs::write(&chunks_path, json).map_err(|e| CorpusError::io(&chunks_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, KnowledgeError> {
        let (vectors_path, chunks_path) = Self::paths(dir);
        if !vectors_path.exists() || !chunks_path.exists() {
            return Err(KnowledgeError::NotBuilt);
        }
        let bytes = fs::read(&vectors_path).map_err(|e| CorpusError::io(&vectors_path, e))?;
        let index = load_index::<S>(&bytes)?;
        let raw = fs::read(&chunks_path).map_err(|e| CorpusError::io(&chunks_path, e))?;
        let file: ChunkFile = serde_json::from_slice(&raw).map_err(|source| CorpusError::Sidecar {
            path: chunks_path.clone(),
            source,
        })?;
        if file.dimension != index.dimension() || file.chunks.len() != index.len() {
            return Err(KnowledgeError::Inconsistent(
                "chunk records do not match the vector file".into(),
            ));
        }
        let mut chunks = BTreeMap::new();
        let mut doc_keys = BTreeMap::new();
        for record in file.chunks {
            if !index.contains(&record.chunk.chunk_id) {
                return Err(KnowledgeError::Inconsistent(format!(
                    "chunk {} has no vector",
                    record.chunk.chunk_id
                )));
            }
            doc_keys.insert(record.chunk.doc_id.clone(), CitationKey::parse(&record.citation_key)?);
            chunks.insert(record.chunk.chunk_id.clone(), record.chunk);
        }
        Ok(KnowledgeBase {
            index,
            chunks,
            doc_keys,
            embedding_model: file.embedding_model,
        })
    }
}
