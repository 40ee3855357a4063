//! OpenAI-compatible embeddings client.

use serde::{Deserialize, Serialize};

use super::EmbeddingBackend;
use crate::llm::{post_json, with_retry, BackendError, OpenAiConfig};

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug)]
pub struct OpenAiEmbeddingClient {
    config: OpenAiConfig,
    agent: ureq::Agent,
}

impl OpenAiEmbeddingClient {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent = config.agent();
        OpenAiEmbeddingClient { config, agent }
    }
}

impl EmbeddingBackend for OpenAiEmbeddingClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let url = self.config.endpoint("embeddings");
        let body = EmbeddingRequest {
            model: &self.config.model,
            input: texts,
        };
        let mut response: EmbeddingResponse = with_retry(&self.config.retry, || {
            post_json(&self.agent, &url, self.config.api_key.as_deref(), &body)
        })?;
        // servers are allowed to reorder; `index` restores input order
        if response.data.iter().all(|d| d.index.is_some()) {
            response.data.sort_by_key(|d| d.index);
        }
        Ok(response.data.into_iter().map(|d| d.embedding).collect())
    }
}
