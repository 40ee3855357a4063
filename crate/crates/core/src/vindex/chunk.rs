use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{estimate_tokens, DocId, Document};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(String);

impl ChunkId {
    pub fn new(id: impl Into<String>) -> Self {
        ChunkId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One retrieval unit: a run of consecutive paragraphs of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    /// Inclusive paragraph range.
    pub paragraph_span: (usize, usize),
    pub text: String,
    pub token_estimate: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    /// When set, consecutive paragraphs are merged while the merged text
    /// stays within this many estimated tokens. `None` keeps one chunk per
    /// paragraph.
    pub max_merged_tokens: Option<usize>,
}

pub fn chunk_document(doc: &Document, config: &ChunkingConfig) -> Vec<Chunk> {
    let make = |start: usize, end: usize| {
        let text = doc.paragraphs()[start..=end]
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        Chunk {
            chunk_id: ChunkId(format!("{}#{:04}", doc.doc_id(), start)),
            doc_id: doc.doc_id().clone(),
            paragraph_span: (start, end),
            token_estimate: estimate_tokens(&text),
            text,
        }
    };

    let Some(cap) = config.max_merged_tokens else {
        return (0..doc.paragraphs().len()).map(|i| make(i, i)).collect();
    };

    let mut chunks = Vec::new();
    let mut start = 0;
    let mut chars = 0;
    for (i, p) in doc.paragraphs().iter().enumerate() {
        let len = p.text.chars().count();
        if i > start && (chars + 2 + len).div_ceil(4) > cap {
            chunks.push(make(start, i - 1));
            start = i;
            chars = len;
        } else if i == start {
            chars = len;
        } else {
            chars += 2 + len;
        }
    }
    chunks.push(make(start, doc.paragraphs().len() - 1));
    chunks
}
