//! Chat-completion backend contract.
//!
//! [`complete_chat`] is the only way requests reach a [`ChatBackend`]; it
//! checks message shape and the token budget before any backend activity.

mod mock;
mod openai;
mod retry;

pub use mock::{RecordingChatBackend, ScriptedChatBackend};
pub use openai::{OpenAiChatClient, OpenAiConfig};
pub use retry::{with_retry, with_retry_using, RetryPolicy, Retryable};

pub(crate) use openai::post_json;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::estimate_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Estimated prompt size of a message list.
pub fn estimate_request_tokens(messages: &[ChatMessage]) -> usize {
    messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}

/// Context window split into prompt space and reply headroom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub max_total: usize,
    pub reserved_for_reply: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_total: 8192,
            reserved_for_reply: 1024,
        }
    }
}

impl TokenBudget {
    pub fn new(max_total: usize, reserved_for_reply: usize) -> Result<Self, LlmError> {
        if reserved_for_reply == 0 || reserved_for_reply >= max_total {
            return Err(LlmError::InvalidRequest(format!(
                "reserved_for_reply must be in (0, {max_total}), got {reserved_for_reply}"
            )));
        }
        Ok(TokenBudget {
            max_total,
            reserved_for_reply,
        })
    }

    /// Largest prompt, in estimated tokens, that may be sent.
    pub fn prompt_limit(&self) -> usize {
        self.max_total - self.reserved_for_reply
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("scripted backend has no replies left")]
    ScriptExhausted,
}

impl Retryable for BackendError {
    fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            BackendError::Decode(_) | BackendError::ScriptExhausted => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request needs ~{estimated} tokens but the prompt limit is {limit}")]
    BudgetExceeded { estimated: usize, limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend has no replies left")]
    ScriptExhausted,
    #[error(transparent)]
    Backend(BackendError),
}

impl From<BackendError> for LlmError {
    fn from(err: BackendError) -> Self {
        match err {
            BackendError::ScriptExhausted => LlmError::ScriptExhausted,
            other => LlmError::Backend(other),
        }
    }
}

/// Something that turns a message list into an assistant reply.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

fn validate_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let systems = messages.iter().filter(|m| m.role == Role::System).count();
    if systems != 1 || messages.first().map(|m| m.role) != Some(Role::System) {
        return Err(LlmError::InvalidRequest(
            "exactly one system message is required, in first position".into(),
        ));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::System && m.content.trim().is_empty())
    {
        return Err(LlmError::InvalidRequest(format!(
            "{:?} message has empty content",
            m.role
        )));
    }
    Ok(())
}

/// Sends `messages` to `backend` after checking shape and budget.
pub fn complete_chat(
    messages: &[ChatMessage],
    budget: &TokenBudget,
    backend: &dyn ChatBackend,
) -> Result<String, LlmError> {
    validate_messages(messages)?;
    let estimated = estimate_request_tokens(messages);
    let limit = budget.prompt_limit();
    if estimated > limit {
        return Err(LlmError::BudgetExceeded { estimated, limit });
    }
    Ok(backend.complete(messages)?)
}
