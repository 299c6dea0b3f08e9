//! Chat-completion access with an on-disk response cache, retry with
//! backoff, a shared rate limiter and an append-only transcript.
//!
//! Two backends sit behind [`Gateway`]: an HTTP provider speaking the common
//! `chat/completions` wire format, and [`MockProvider`], a deterministic
//! stand-in that understands the prompt shapes this crate produces.

mod cache;
mod http;
mod mock;
mod rate_limit;
mod transcript;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use http::{HttpBackend, ProviderConfig, RETRYABLE_STATUSES};
pub use mock::{mock_complete, MockProvider};
pub use rate_limit::RateLimiter;
pub use transcript::{Transcript, TranscriptEntry};

use crate::ErrorClass;

/// Sampling temperature for data-generation prompts.
pub const GENERATION_TEMPERATURE: f64 = 0.7;
/// Sampling temperature for zero-shot task prompts.
pub const TASK_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("rate limited: retries exhausted after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("provider returned status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache: {0}")]
    Cache(String),
}

impl ErrorClass for GatewayError {
    fn class(&self) -> &'static str {
        match self {
            GatewayError::RateLimited { .. } => "RateLimited",
            GatewayError::TransportError(_) => "TransportError",
            GatewayError::ProviderError { .. } => "ProviderError",
            GatewayError::MissingApiKey(_) => "MissingApiKey",
            GatewayError::InvalidRequest(_) => "InvalidRequest",
            GatewayError::Cache(_) => "CacheError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Single-user-message request with the default model and token budget.
    pub fn user(prompt: impl Into<String>, temperature: f64) -> Self {
        ChatRequest {
            model: DEFAULT_MODEL.to_string(),
            messages: vec![Message::user(prompt)],
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        if self.model.trim().is_empty() {
            return bad("model is empty");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return bad("at least one user message is required");
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return bad("message content is empty");
        }
        Ok(())
    }

    /// Concatenated content of the user messages.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Real,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub provider: ProviderKind,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: &'a [Message],
}

/// Canonical JSON form hashed by [`cache_key`]: fixed field order
/// `model, temperature, max_tokens, messages`, no insignificant whitespace.
pub fn canonical_json(request: &ChatRequest) -> String {
    serde_json::to_string(&CanonicalRequest {
        model: &request.model,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        messages: &request.messages,
    })
    .expect("request serializes")
}

/// Lowercase hex SHA-256 of [`canonical_json`].
pub fn cache_key(request: &ChatRequest) -> String {
    hex::encode(Sha256::digest(canonical_json(request).as_bytes()))
}

pub enum Backend {
    Http(HttpBackend),
    Mock(MockProvider),
}

/// Entry point for every LLM call in the pipeline. `complete` may be called
/// from several threads at once.
pub struct Gateway {
    backend: Backend,
    cache: Option<ResponseCache>,
    transcript: Option<Transcript>,
}

impl Gateway {
    pub fn new(backend: Backend) -> Self {
        Gateway {
            backend,
            cache: None,
            transcript: None,
        }
    }

    pub fn mock(provider: MockProvider) -> Self {
        Gateway::new(Backend::Mock(provider))
    }

    pub fn http(config: ProviderConfig) -> Self {
        Gateway::new(Backend::Http(HttpBackend::new(config)))
    }

    pub fn with_cache(mut self, dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        self.cache = Some(ResponseCache::open(dir)?);
        Ok(self)
    }

    pub fn with_transcript(mut self, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        self.transcript = Some(Transcript::open(path)?);
        Ok(self)
    }

    pub fn provider_kind(&self) -> ProviderKind {
        match self.backend {
            Backend::Http(_) => ProviderKind::Real,
            Backend::Mock(_) => ProviderKind::Mock,
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let key = cache_key(request);
        let start = Instant::now();
        if let Some(cache) = &self.cache {
            if let Some(content) = cache.get(&key) {
                if let Some(t) = &self.transcript {
                    t.record(&TranscriptEntry::cache_hit(
                        &key,
                        request,
                        &content,
                        self.provider_kind(),
                    ))?;
                }
                return Ok(ChatResponse {
                    content,
                    provider: self.provider_kind(),
                    cached: true,
                    latency_ms: start.elapsed().as_millis() as u64,
                });
            }
        }
        let content = match &self.backend {
            Backend::Mock(mock) => {
                let content = mock.reply(request);
                if let Some(t) = &self.transcript {
                    let entry = TranscriptEntry::attempt(&key, request, 0, ProviderKind::Mock).succeeded(
                        &content,
                        None,
                        start.elapsed().as_millis() as u64,
                    );
                    t.record(&entry)?;
                }
                content
            }
            Backend::Http(http) => http.complete_with_retry(request, &key, self.transcript.as_ref())?,
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &content)?;
        }
        Ok(ChatResponse {
            content,
            provider: self.provider_kind(),
            cached: false,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}
