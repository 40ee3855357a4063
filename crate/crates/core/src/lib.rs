//! Retrieval-augmented conversation over a corpus of scientific papers.
//!
//! Papers are ingested as plain text, optionally distilled by a chat model
//! to a fraction of their length with the paragraph count held fixed, split
//! into paragraph chunks, embedded, and indexed for exact inner-product
//! search. A chat turn condenses the conversation into a standalone
//! question, retrieves context within the model's token budget, asks the
//! model, and checks the author-year citations in the answer against the
//! corpus.
//!
//! Vector types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod chat;
pub mod config;
pub mod corpus;
pub mod distill;
pub mod embed;
pub mod knowledge;
pub mod llm;
pub mod offline;
pub mod scalar;
pub mod vindex;
pub mod workspace;

#[cfg(test)]
mod test_http;

pub use chat::{
    assemble_prompt, condense_question, ground_citations, retrieve_context, run_turn, Backends, ChatConfig, ChatError,
    ChatSession, ChatTurn, CitationReport, RetrievedContext, RetrievedHit, Stage, TurnError,
};
pub use config::{ConfigError, Settings};
pub use corpus::{
    estimate_tokens, ingest_text, word_count, CitationKey, Corpus, CorpusError, DocId, Document, DocumentMeta,
    Paragraph, SourceKind,
};
pub use distill::{
    build_distill_prompt, distill_document, validate_distillation, DistillError, Distillation, DistillationPolicy,
    DistillationReport,
};
pub use embed::{
    embed_texts, mock_embed, normalize_vector, EmbedError, EmbeddingBackend, EmbeddingCache, EmbeddingVector,
    MockEmbedder,
};
pub use knowledge::{KnowledgeBase, KnowledgeError};
pub use llm::{
    complete_chat, BackendError, ChatBackend, ChatMessage, LlmError, RetryPolicy, Role, ScriptedChatBackend,
    TokenBudget,
};
pub use offline::OfflineChatBackend;
pub use scalar::Scalar;
pub use vindex::{
    brute_force_topk, load_index, save_index, Chunk, ChunkId, ChunkingConfig, IndexError, SearchHit, VectorIndex,
};
pub use workspace::{Workspace, WorkspaceError};

/// Single-precision embedding, the default storage type.
pub type Embedding = EmbeddingVector<f32>;
pub type Embedding64 = EmbeddingVector<f64>;
pub type FlatIndex = VectorIndex<f32>;
pub type FlatIndex64 = VectorIndex<f64>;
pub type Knowledge = KnowledgeBase<f32>;
pub type Knowledge64 = KnowledgeBase<f64>;
