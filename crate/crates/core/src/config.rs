//! Runtime settings: built-in defaults, then `PAPERCHAT_*` environment
//! variables, then an optional TOML file.
//!
//! | variable                     | file key                   |
//! |------------------------------|----------------------------|
//! | `PAPERCHAT_MOCK`             | `mock_mode`                |
//! | `PAPERCHAT_BASE_URL`         | `base_url`                 |
//! | `PAPERCHAT_API_KEY`          | `api_key`                  |
//! | `PAPERCHAT_CHAT_MODEL`       | `chat_model`               |
//! | `PAPERCHAT_EMBEDDING_MODEL`  | `embedding_model`          |
//! | `PAPERCHAT_TEMPERATURE`      | `temperature`              |
//! | `PAPERCHAT_CORPUS`           | `corpus_dir`               |
//! | `PAPERCHAT_MOCK_SCRIPT`      | `mock_script`              |
//! | `PAPERCHAT_K`                | `k_retrieve`               |
//! | `PAPERCHAT_CONFIG`           | (path of the file itself)  |
//!
//! `OPENAI_API_KEY` is read when `PAPERCHAT_API_KEY` is unset.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::chat::{ChatConfig, DEFAULT_K_RETRIEVE};
use crate::embed::{EmbeddingBackend, MockEmbedder, OpenAiEmbeddingClient, DEFAULT_BATCH_SIZE, DEFAULT_MOCK_DIMENSION};
use crate::llm::{ChatBackend, OpenAiChatClient, OpenAiConfig, ScriptedChatBackend, TokenBudget};
use crate::offline::OfflineChatBackend;
use crate::vindex::ChunkingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing configuration: {0} (or enable mock mode)")]
    Missing(&'static str),
    #[error("invalid value for {name}: {value:?}")]
    Invalid { name: &'static str, value: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub mock_mode: bool,
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub chat_model: Option<String>,
    pub embedding_model: Option<String>,
    pub temperature: f32,
    pub corpus_dir: PathBuf,
    /// JSON array of reply strings for the scripted mock chat backend.
    pub mock_script: Option<PathBuf>,
    pub mock_dimension: usize,
    pub k_retrieve: usize,
    pub budget: TokenBudget,
    pub embed_batch_size: usize,
    pub chunking: ChunkingConfig,
    pub distill_paragraphs_per_request: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            mock_mode: false,
            base_url: None,
            api_key: None,
            chat_model: None,
            embedding_model: None,
            temperature: 0.0,
            corpus_dir: PathBuf::from("corpus"),
            mock_script: None,
            mock_dimension: DEFAULT_MOCK_DIMENSION,
            k_retrieve: DEFAULT_K_RETRIEVE,
            budget: TokenBudget::default(),
            embed_batch_size: DEFAULT_BATCH_SIZE,
            chunking: ChunkingConfig::default(),
            distill_paragraphs_per_request: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSettings {
    mock_mode: Option<bool>,
    base_url: Option<String>,
    api_key: Option<String>,
    chat_model: Option<String>,
    embedding_model: Option<String>,
    temperature: Option<f32>,
    corpus_dir: Option<PathBuf>,
    mock_script: Option<PathBuf>,
    mock_dimension: Option<usize>,
    k_retrieve: Option<usize>,
    max_total_tokens: Option<usize>,
    reserved_for_reply: Option<usize>,
    embed_batch_size: Option<usize>,
    chunk_max_tokens: Option<usize>,
    distill_paragraphs_per_request: Option<usize>,
}

fn parse_bool(name: &'static str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" | "" => Ok(false),
        _ => Err(ConfigError::Invalid {
            name,
            value: value.into(),
        }),
    }
}

fn parse_num<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Invalid {
        name,
        value: value.into(),
    })
}

impl Settings {
    /// Reads the process environment, then the file named by
    /// `PAPERCHAT_CONFIG` if set.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_vars(|name| std::env::var(name).ok())
    }

    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        if let Some(v) = var("PAPERCHAT_MOCK") {
            s.mock_mode = parse_bool("PAPERCHAT_MOCK", &v)?;
        }
        s.base_url = var("PAPERCHAT_BASE_URL");
        s.api_key = var("PAPERCHAT_API_KEY").or_else(|| var("OPENAI_API_KEY"));
        s.chat_model = var("PAPERCHAT_CHAT_MODEL");
        s.embedding_model = var("PAPERCHAT_EMBEDDING_MODEL");
        if let Some(v) = var("PAPERCHAT_TEMPERATURE") {
            s.temperature = parse_num("PAPERCHAT_TEMPERATURE", &v)?;
        }
        if let Some(v) = var("PAPERCHAT_CORPUS") {
            s.corpus_dir = PathBuf::from(v);
        }
        s.mock_script = var("PAPERCHAT_MOCK_SCRIPT").map(PathBuf::from);
        if let Some(v) = var("PAPERCHAT_K") {
            s.k_retrieve = parse_num("PAPERCHAT_K", &v)?;
        }
        if let Some(path) = var("PAPERCHAT_CONFIG") {
            s.apply_file(Path::new(&path))?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Overrides fields with those present in a TOML file.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let file_err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let f: FileSettings = toml::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = f.$field { self.$field = v; } )* };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => { $( if f.$field.is_some() { self.$field = f.$field; } )* };
        }
        set!(
            mock_mode,
            temperature,
            corpus_dir,
            mock_dimension,
            k_retrieve,
            embed_batch_size
        );
        set_opt!(
            base_url,
            api_key,
            chat_model,
            embedding_model,
            mock_script,
            distill_paragraphs_per_request
        );
        if let Some(v) = f.max_total_tokens {
            self.budget.max_total = v;
        }
        if let Some(v) = f.reserved_for_reply {
            self.budget.reserved_for_reply = v;
        }
        if f.chunk_max_tokens.is_some() {
            self.chunking.max_merged_tokens = f.chunk_max_tokens;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        TokenBudget::new(self.budget.max_total, self.budget.reserved_for_reply).map_err(|_| ConfigError::Invalid {
            name: "reserved_for_reply",
            value: self.budget.reserved_for_reply.to_string(),
        })?;
        if self.k_retrieve == 0 {
            return Err(ConfigError::Invalid {
                name: "k_retrieve",
                value: "0".into(),
            });
        }
        if self.mock_dimension < 2 {
            return Err(ConfigError::Invalid {
                name: "mock_dimension",
                value: self.mock_dimension.to_string(),
            });
        }
        Ok(())
    }

    pub fn chat_config(&self) -> ChatConfig {
        ChatConfig {
            k_retrieve: self.k_retrieve,
            budget: self.budget,
        }
    }

    fn openai_config(&self, model: Option<&String>, what: &'static str) -> Result<OpenAiConfig, ConfigError> {
        let base = self
            .base_url
            .as_ref()
            .ok_or(ConfigError::Missing("PAPERCHAT_BASE_URL"))?;
        let model = model.ok_or(ConfigError::Missing(what))?;
        let mut cfg = OpenAiConfig::new(base, model);
        cfg.api_key = self.api_key.clone();
        cfg.temperature = self.temperature;
        Ok(cfg)
    }

    /// The chat backend these settings describe.
    pub fn chat_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        if self.mock_mode {
            return match &self.mock_script {
                Some(path) => {
                    let file_err = |message: String| ConfigError::File {
                        path: path.clone(),
                        message,
                    };
                    let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
                    let replies: Vec<String> = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
                    Ok(Arc::new(ScriptedChatBackend::new(replies)))
                }
                None => Ok(Arc::new(OfflineChatBackend)),
            };
        }
        let cfg = self.openai_config(self.chat_model.as_ref(), "PAPERCHAT_CHAT_MODEL")?;
        Ok(Arc::new(OpenAiChatClient::new(cfg)))
    }

    pub fn embedding_backend(&self) -> Result<Arc<dyn EmbeddingBackend>, ConfigError> {
        if self.mock_mode {
            return Ok(Arc::new(MockEmbedder::new(self.mock_dimension)));
        }
        let cfg = self.openai_config(self.embedding_model.as_ref(), "PAPERCHAT_EMBEDDING_MODEL")?;
        Ok(Arc::new(OpenAiEmbeddingClient::new(cfg)))
    }
}
