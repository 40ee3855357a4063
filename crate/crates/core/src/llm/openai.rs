//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{with_retry, BackendError, ChatBackend, ChatMessage, RetryPolicy};

/// Connection settings shared by the chat and embedding clients.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenAiConfig {
    /// e.g. `https://api.openai.com/v1`; endpoint paths are appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f32,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        OpenAiConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    pub(crate) fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

/// POSTs a JSON body and decodes a JSON reply. Non-2xx statuses become
/// [`BackendError::Http`].
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &B,
) -> Result<R, BackendError> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let payload = serde_json::to_vec(body).map_err(|e| BackendError::Decode(e.to_string()))?;
    let mut response = request
        .send(&payload[..])
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(BackendError::Http {
            status,
            message: text.chars().take(500).collect(),
        });
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()))
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Debug)]
pub struct OpenAiChatClient {
    config: OpenAiConfig,
    agent: ureq::Agent,
}

impl OpenAiChatClient {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent = config.agent();
        OpenAiChatClient { config, agent }
    }

    pub fn config(&self) -> &OpenAiConfig {
        &self.config
    }
}

impl ChatBackend for OpenAiChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let url = self.config.endpoint("chat/completions");
        let body = CompletionRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        };
        let response: CompletionResponse = with_retry(&self.config.retry, || {
            post_json(&self.agent, &url, self.config.api_key.as_deref(), &body)
        })?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Decode("response has no message content".into()))
    }
}
