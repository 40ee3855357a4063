//! A corpus directory with its index and configured backends: the layer the
//! CLI and HTTP service drive.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::chat::{run_turn, Backends, ChatSession, ChatTurn, TurnError};
use crate::config::{ConfigError, Settings};
use crate::corpus::{ingest_text, Corpus, CorpusError, DocId, DocumentMeta, SourceKind};
use crate::distill::{distill_document, DistillError, Distillation, DistillationPolicy};
use crate::embed::{EmbeddingBackend, EmbeddingCache};
use crate::knowledge::{KnowledgeBase, KnowledgeError};
use crate::llm::ChatBackend;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Turn(#[from] TurnError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("the index has not been built; run an index rebuild first")]
    IndexNotBuilt,
}

pub struct Workspace {
    settings: Settings,
    corpus: Corpus,
    knowledge: Option<KnowledgeBase<f32>>,
    chat: Arc<dyn ChatBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    cache: EmbeddingCache<f32>,
}

impl Workspace {
    /// Opens `settings.corpus_dir` with the backends the settings describe.
    pub fn open(settings: Settings) -> Result<Self, WorkspaceError> {
        let chat = settings.chat_backend()?;
        let embedder = settings.embedding_backend()?;
        Self::open_with(settings, chat, embedder)
    }

    pub fn open_with(
        settings: Settings,
        chat: Arc<dyn ChatBackend>,
        embedder: Arc<dyn EmbeddingBackend>,
    ) -> Result<Self, WorkspaceError> {
        let corpus = Corpus::load_dir(&settings.corpus_dir)?;
        let knowledge = match KnowledgeBase::load(&settings.corpus_dir) {
            Ok(kb) => Some(kb),
            Err(KnowledgeError::NotBuilt) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Workspace {
            settings,
            corpus,
            knowledge,
            chat,
            embedder,
            cache: EmbeddingCache::new(),
        })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn dir(&self) -> &Path {
        &self.settings.corpus_dir
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn knowledge(&self) -> Option<&KnowledgeBase<f32>> {
        self.knowledge.as_ref()
    }

    pub fn corpus_id(&self) -> String {
        self.dir()
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into())
    }

    pub fn ingest(&mut self, text: &str, citation_key: &str, title: &str) -> Result<DocumentMeta, WorkspaceError> {
        let doc = ingest_text(text, citation_key, title)?;
        let meta = doc.metadata();
        Corpus::write_document(self.dir(), &doc, None)?;
        self.corpus.insert(doc)?;
        Ok(meta)
    }

    /// Every stored document, raw and distilled.
    pub fn documents(&self) -> Vec<DocumentMeta> {
        self.corpus.all_documents().into_iter().map(|d| d.metadata()).collect()
    }

    pub fn distill_policy(&self, target_ratio: Option<f64>) -> Result<DistillationPolicy, DistillError> {
        let policy = DistillationPolicy {
            target_ratio: target_ratio.unwrap_or(0.5),
            paragraphs_per_request: self.settings.distill_paragraphs_per_request,
            ..DistillationPolicy::default()
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Runs distillation without touching stored state.
    pub fn compute_distillation(
        &self,
        doc_id: &DocId,
        target_ratio: Option<f64>,
    ) -> Result<Distillation, WorkspaceError> {
        let doc = self.corpus.get(doc_id)?;
        if doc.source_kind() != SourceKind::Raw {
            return Err(DistillError::NotRaw(doc_id.clone()).into());
        }
        let policy = self.distill_policy(target_ratio)?;
        Ok(distill_document(
            doc,
            &policy,
            self.chat.as_ref(),
            &self.settings.budget,
        )?)
    }

    /// Saves the report, and the distilled document when it was accepted.
    pub fn store_distillation(&mut self, distillation: &Distillation) -> Result<(), WorkspaceError> {
        let report = &distillation.report;
        let reports = self.dir().join("reports");
        fs::create_dir_all(&reports).map_err(|e| CorpusError::io(&reports, e))?;
        let path: PathBuf = reports.join(format!("{}.json", report.original_doc_id));
        let json = serde_json::to_vec_pretty(report).expect("report serializes");
        fs::write(&path, json).map_err(|e| CorpusError::io(&path, e))?;
        if report.accepted {
            Corpus::write_document(self.dir(), &distillation.document, Some(&report.original_doc_id))?;
            self.corpus
                .set_distilled(&report.original_doc_id, distillation.document.clone())?;
        }
        Ok(())
    }

    pub fn distill(&mut self, doc_id: &DocId, target_ratio: Option<f64>) -> Result<Distillation, WorkspaceError> {
        let distillation = self.compute_distillation(doc_id, target_ratio)?;
        self.store_distillation(&distillation)?;
        Ok(distillation)
    }

    pub fn build_knowledge(&self) -> Result<KnowledgeBase<f32>, WorkspaceError> {
        Ok(KnowledgeBase::build(
            &self.corpus,
            self.embedder.as_ref(),
            &self.cache,
            &self.settings.chunking,
            self.settings.embed_batch_size,
        )?)
    }

    pub fn install_knowledge(&mut self, knowledge: KnowledgeBase<f32>) -> Result<usize, WorkspaceError> {
        knowledge.save(self.dir())?;
        let n = knowledge.len();
        self.knowledge = Some(knowledge);
        Ok(n)
    }

    /// Rebuilds and saves the index; returns the number of chunks indexed.
    pub fn rebuild_index(&mut self) -> Result<usize, WorkspaceError> {
        let kb = self.build_knowledge()?;
        self.install_knowledge(kb)
    }

    pub fn new_session(&self, session_id: impl Into<String>) -> ChatSession {
        ChatSession::new(session_id, self.corpus_id(), self.settings.chat_config())
    }

    pub fn run_turn(&self, session: &mut ChatSession, query: &str) -> Result<ChatTurn, WorkspaceError> {
        let knowledge = self.knowledge.as_ref().ok_or(WorkspaceError::IndexNotBuilt)?;
        let backends = Backends {
            chat: self.chat.as_ref(),
            embedder: self.embedder.as_ref(),
            cache: &self.cache,
        };
        Ok(run_turn(session, query, &backends, knowledge)?.clone())
    }
}
