use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use paperchat_core::{
    BackendError, ChatError, CorpusError, DistillError, EmbedError, IndexError, KnowledgeError, LlmError,
    WorkspaceError,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorCode {
    EmptyInput,
    MalformedCitationKey,
    DuplicateDocument,
    NotFound,
    InvalidRequest,
    EmptyCorpus,
    IndexNotBuilt,
    BudgetExceeded,
    ContextOverflow,
    BackendError,
    SessionBusy,
    CorruptIndex,
    ConfigError,
    InternalError,
}

impl ApiErrorCode {
    pub const ALL: [ApiErrorCode; 14] = [
        ApiErrorCode::EmptyInput,
        ApiErrorCode::MalformedCitationKey,
        ApiErrorCode::DuplicateDocument,
        ApiErrorCode::NotFound,
        ApiErrorCode::InvalidRequest,
        ApiErrorCode::EmptyCorpus,
        ApiErrorCode::IndexNotBuilt,
        ApiErrorCode::BudgetExceeded,
        ApiErrorCode::ContextOverflow,
        ApiErrorCode::BackendError,
        ApiErrorCode::SessionBusy,
        ApiErrorCode::CorruptIndex,
        ApiErrorCode::ConfigError,
        ApiErrorCode::InternalError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApiErrorCode::EmptyInput => "empty_input",
            ApiErrorCode::MalformedCitationKey => "malformed_citation_key",
            ApiErrorCode::DuplicateDocument => "duplicate_document",
            ApiErrorCode::NotFound => "not_found",
            ApiErrorCode::InvalidRequest => "invalid_request",
            ApiErrorCode::EmptyCorpus => "empty_corpus",
            ApiErrorCode::IndexNotBuilt => "index_not_built",
            ApiErrorCode::BudgetExceeded => "budget_exceeded",
            ApiErrorCode::ContextOverflow => "context_overflow",
            ApiErrorCode::BackendError => "backend_error",
            ApiErrorCode::SessionBusy => "session_busy",
            ApiErrorCode::CorruptIndex => "corrupt_index",
            ApiErrorCode::ConfigError => "config_error",
            ApiErrorCode::InternalError => "internal_error",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            ApiErrorCode::EmptyInput | ApiErrorCode::MalformedCitationKey | ApiErrorCode::InvalidRequest => {
                StatusCode::BAD_REQUEST
            }
            ApiErrorCode::NotFound => StatusCode::NOT_FOUND,
            ApiErrorCode::DuplicateDocument
            | ApiErrorCode::EmptyCorpus
            | ApiErrorCode::IndexNotBuilt
            | ApiErrorCode::SessionBusy => StatusCode::CONFLICT,
            ApiErrorCode::BudgetExceeded | ApiErrorCode::ContextOverflow => StatusCode::UNPROCESSABLE_ENTITY,
            ApiErrorCode::BackendError => StatusCode::BAD_GATEWAY,
            ApiErrorCode::CorruptIndex | ApiErrorCode::ConfigError | ApiErrorCode::InternalError => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ApiErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

impl ApiError {
    pub fn new(code: ApiErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            stage: None,
        }
    }
}

fn corpus_code(e: &CorpusError) -> ApiErrorCode {
    match e {
        CorpusError::EmptyInput | CorpusError::EmptyParagraph(_) => ApiErrorCode::EmptyInput,
        CorpusError::MalformedCitationKey(_) => ApiErrorCode::MalformedCitationKey,
        CorpusError::DuplicateDocId(_) | CorpusError::DuplicateCitationKey(_) => ApiErrorCode::DuplicateDocument,
        CorpusError::NotFound(_) => ApiErrorCode::NotFound,
        CorpusError::Io { .. } | CorpusError::Sidecar { .. } => ApiErrorCode::InternalError,
    }
}

fn backend_code(e: &BackendError) -> ApiErrorCode {
    match e {
        BackendError::Transport(_)
        | BackendError::Http { .. }
        | BackendError::Decode(_)
        | BackendError::ScriptExhausted => ApiErrorCode::BackendError,
    }
}

fn llm_code(e: &LlmError) -> ApiErrorCode {
    match e {
        LlmError::BudgetExceeded { .. } => ApiErrorCode::BudgetExceeded,
        LlmError::InvalidRequest(_) => ApiErrorCode::InternalError,
        LlmError::ScriptExhausted => ApiErrorCode::BackendError,
        LlmError::Backend(b) => backend_code(b),
    }
}

fn embed_code(e: &EmbedError) -> ApiErrorCode {
    match e {
        EmbedError::EmptyInput | EmbedError::EmptyText(_) => ApiErrorCode::EmptyInput,
        EmbedError::ZeroVector
        | EmbedError::NonFinite
        | EmbedError::DimensionMismatch { .. }
        | EmbedError::CountMismatch { .. } => ApiErrorCode::BackendError,
        EmbedError::Backend(b) => backend_code(b),
    }
}

fn index_code(e: &IndexError) -> ApiErrorCode {
    match e {
        IndexError::EmptyIndex => ApiErrorCode::EmptyCorpus,
        IndexError::CorruptIndex(_) => ApiErrorCode::CorruptIndex,
        IndexError::InvalidK => ApiErrorCode::InvalidRequest,
        IndexError::ZeroDimension
        | IndexError::DimensionMismatch { .. }
        | IndexError::DuplicateChunkId(_)
        | IndexError::NotNormalized { .. } => ApiErrorCode::InternalError,
    }
}

fn distill_code(e: &DistillError) -> ApiErrorCode {
    match e {
        DistillError::InvalidPolicy(_) | DistillError::NotRaw(_) => ApiErrorCode::InvalidRequest,
        DistillError::DegenerateOriginal => ApiErrorCode::EmptyInput,
        DistillError::EmptyReply => ApiErrorCode::BackendError,
        DistillError::Llm(l) => llm_code(l),
        DistillError::Corpus(c) => corpus_code(c),
    }
}

fn knowledge_code(e: &KnowledgeError) -> ApiErrorCode {
    match e {
        KnowledgeError::EmptyCorpus => ApiErrorCode::EmptyCorpus,
        KnowledgeError::NotBuilt => ApiErrorCode::IndexNotBuilt,
        KnowledgeError::Inconsistent(_) => ApiErrorCode::CorruptIndex,
        KnowledgeError::Embed(x) => embed_code(x),
        KnowledgeError::Index(x) => index_code(x),
        KnowledgeError::Corpus(x) => corpus_code(x),
    }
}

fn chat_code(e: &ChatError) -> ApiErrorCode {
    match e {
        ChatError::EmptyQuery => ApiErrorCode::EmptyInput,
        ChatError::EmptyStandaloneQuestion => ApiErrorCode::BackendError,
        ChatError::EmptyIndex => ApiErrorCode::EmptyCorpus,
        ChatError::ContextOverflow { .. } => ApiErrorCode::ContextOverflow,
        ChatError::BudgetExceeded { .. } => ApiErrorCode::BudgetExceeded,
        ChatError::EmbeddingModelMismatch { .. } => ApiErrorCode::ConfigError,
        ChatError::EmptyContext => ApiErrorCode::InternalError,
        ChatError::MissingChunk(_) => ApiErrorCode::CorruptIndex,
        ChatError::Embed(x) => embed_code(x),
        ChatError::Index(x) => index_code(x),
        ChatError::Llm(x) => llm_code(x),
    }
}

/// The single API code for a workspace failure.
pub fn error_code(e: &WorkspaceError) -> ApiErrorCode {
    match e {
        WorkspaceError::Corpus(x) => corpus_code(x),
        WorkspaceError::Distill(x) => distill_code(x),
        WorkspaceError::Knowledge(x) => knowledge_code(x),
        WorkspaceError::Turn(t) => chat_code(&t.source),
        WorkspaceError::Config(_) => ApiErrorCode::ConfigError,
        WorkspaceError::IndexNotBuilt => ApiErrorCode::IndexNotBuilt,
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        let stage = match &e {
            WorkspaceError::Turn(t) => Some(t.stage.to_string()),
            _ => None,
        };
        ApiError {
            code: error_code(&e),
            message: e.to_string(),
            stage,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
