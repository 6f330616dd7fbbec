//! Chat-completion gateway over OpenAI-compatible endpoints.
//!
//! One [`Gateway`] instance may be shared across threads; it enforces the
//! configured `max_concurrency` bound on in-flight backend calls and retries
//! transient failures (HTTP 429, 5xx, timeouts) with exponential backoff and
//! full jitter. The scripted [`MockBackend`] is the determinism mechanism for
//! tests and offline runs; `seed` is passed through to remote backends but
//! determinism is never assumed from them.

mod http;
mod mock;

pub use http::HttpBackend;
pub use mock::{make_mock_backend, MockBackend, MockSpec, RecordedRequest};

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{Message, RenderedPrompt};
use crate::util::Semaphore;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
/// Environment variable overriding the default base URL.
pub const BASE_URL_ENV: &str = "QUERYGYM_BASE_URL";

fn default_base_url() -> String {
    std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_owned())
}

/// Generation settings shared by every call: everything but the model name.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Completions requested per call.
    pub n: u32,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    pub backoff_base_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 256,
            seed: None,
            n: 1,
            base_url: default_base_url(),
            api_key_env: DEFAULT_API_KEY_ENV.to_owned(),
            timeout_secs: 60,
            max_retries: 3,
            max_concurrency: 4,
            backoff_base_ms: 1_000,
        }
    }
}

impl LlmSettings {
    pub fn into_config(self, model: impl Into<String>) -> LLMConfig {
        LLMConfig {
            model: model.into(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
            n: self.n,
            base_url: self.base_url,
            api_key_env: self.api_key_env,
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            max_concurrency: self.max_concurrency,
            backoff_base_ms: self.backoff_base_ms,
        }
    }
}

/// Full per-call configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLMConfig {
    pub model: String,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "defaults::n")]
    pub n: u32,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "defaults::api_key_env")]
    pub api_key_env: String,
    #[serde(default = "defaults::timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "defaults::backoff_base_ms")]
    pub backoff_base_ms: u64,
}

mod defaults {
    pub(super) fn temperature() -> f64 {
        1.0
    }
    pub(super) fn max_tokens() -> u32 {
        256
    }
    pub(super) fn n() -> u32 {
        1
    }
    pub(super) fn api_key_env() -> String {
        super::DEFAULT_API_KEY_ENV.to_owned()
    }
    pub(super) fn timeout_secs() -> u64 {
        60
    }
    pub(super) fn max_retries() -> u32 {
        3
    }
    pub(super) fn max_concurrency() -> usize {
        4
    }
    pub(super) fn backoff_base_ms() -> u64 {
        1_000
    }
}

impl LLMConfig {
    pub fn new(model: impl Into<String>) -> Self {
        LlmSettings::default().into_config(model)
    }

    /// Everything but the model name.
    pub fn settings(&self) -> LlmSettings {
        LlmSettings {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
            n: self.n,
            base_url: self.base_url.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            max_concurrency: self.max_concurrency,
            backoff_base_ms: self.backoff_base_ms,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn backoff_base(&self) -> Duration {
        Duration::from_millis(self.backoff_base_ms)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model.is_empty() {
            return Err(LlmError::InvalidConfig {
                field: "model".into(),
                detail: "model must be non-empty".into(),
            });
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig {
                field: "temperature".into(),
                detail: format!("must be >= 0, got {}", self.temperature),
            });
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidConfig {
                field: "max_tokens".into(),
                detail: "must be >= 1".into(),
            });
        }
        if self.n == 0 {
            return Err(LlmError::InvalidConfig {
                field: "n".into(),
                detail: "must be >= 1".into(),
            });
        }
        if self.max_concurrency == 0 {
            return Err(LlmError::InvalidConfig {
                field: "max_concurrency".into(),
                detail: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Token counts reported by the backend, when available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        }
    }
}

/// Trace of one logical completion call, echoing the parameters used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallTrace {
    /// Hex digest of the rendered messages.
    pub request_fingerprint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub n: u32,
    pub attempt_count: u32,
    pub latency_ms: u64,
    pub backend: BackendKind,
    /// How many fewer choices than requested the backend returned.
    pub choice_shortfall: Option<u32>,
}

/// A successful completion: the generated texts plus the call trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub choices: Vec<String>,
    pub usage: Option<Usage>,
    pub trace: CallTrace,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid llm config: {field}: {detail}")]
    InvalidConfig { field: String, detail: String },
    #[error("api key environment variable `{var}` is not set")]
    MissingApiKey { var: String },
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("bad request (HTTP {status}): {detail}")]
    BadRequest { status: u16, detail: String },
    #[error("retries exhausted after {attempts} attempts (last status {last_status:?}): {detail}")]
    ExhaustedRetries {
        attempts: u32,
        last_status: Option<u16>,
        detail: String,
    },
    #[error("backend returned zero choices")]
    EmptyResponse,
    #[error("mock script exhausted")]
    ScriptExhausted,
}

/// What a backend is asked to do for one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [Message],
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: u32,
    pub seed: Option<u64>,
}

/// A backend's reply for one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub texts: Vec<String>,
    pub usage: Option<Usage>,
}

/// Errors a backend may surface; `Transient` is the only retried class.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transient failure (status {status:?}): {detail}")]
    Transient { status: Option<u16>, detail: String },
    #[error("auth failure (HTTP {status})")]
    Auth { status: u16 },
    #[error("bad request (HTTP {status}): {detail}")]
    BadRequest { status: u16, detail: String },
    #[error("mock script exhausted")]
    ScriptExhausted,
}

/// A chat-completion backend: one attempt per call, no retry logic inside.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<BackendReply, BackendError>;
    fn kind(&self) -> BackendKind;
}

/// Shared, concurrency-bounded entry point for completions.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limiter: Semaphore,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, max_concurrency: usize) -> Self {
        Self {
            backend,
            limiter: Semaphore::new(max_concurrency.max(1)),
        }
    }

    /// Builds a gateway over the HTTP backend described by `config`.
    pub fn for_config(config: &LLMConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let backend = HttpBackend::from_config(config)?;
        Ok(Self::new(Arc::new(backend), config.max_concurrency))
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Runs one logical completion: retries transient failures with
    /// exponential backoff (full jitter), never altering the request.
    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &LLMConfig,
    ) -> Result<Completion, LlmError> {
        config.validate()?;
        let request = ChatRequest {
            model: &config.model,
            messages: &prompt.messages,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            n: config.n,
            seed: config.seed,
        };
        let max_attempts = config.max_retries.saturating_add(1);
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                self.backend.chat(&request)
            };
            match outcome {
                Ok(reply) => {
                    if reply.texts.is_empty() {
                        return Err(LlmError::EmptyResponse);
                    }
                    let shortfall = (config.n as usize).saturating_sub(reply.texts.len());
                    return Ok(Completion {
                        trace: CallTrace {
                            request_fingerprint: prompt.fingerprint.clone(),
                            model: config.model.clone(),
                            temperature: config.temperature,
                            max_tokens: config.max_tokens,
                            seed: config.seed,
                            n: config.n,
                            attempt_count: attempt,
                            latency_ms: started.elapsed().as_millis() as u64,
                            backend: self.backend.kind(),
                            choice_shortfall: (shortfall > 0).then_some(shortfall as u32),
                        },
                        choices: reply.texts,
                        usage: reply.usage,
                    });
                }
                Err(BackendError::Transient { status, detail }) => {
                    if attempt >= max_attempts {
                        return Err(LlmError::ExhaustedRetries {
                            attempts: attempt,
                            last_status: status,
                            detail,
                        });
                    }
                    std::thread::sleep(backoff_delay(config.backoff_base(), attempt));
                }
                Err(BackendError::Auth { status }) => return Err(LlmError::Auth { status }),
                Err(BackendError::BadRequest { status, detail }) => {
                    return Err(LlmError::BadRequest { status, detail })
                }
                Err(BackendError::ScriptExhausted) => return Err(LlmError::ScriptExhausted),
            }
        }
    }
}

/// Full-jitter backoff: uniform in [0, base * 2^(attempt-1)].
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let ceiling = base.as_millis() as u64 * (1u64 << (attempt - 1).min(16));
    if ceiling == 0 {
        return Duration::ZERO;
    }
    Duration::from_millis(rand::rng().random_range(0..=ceiling))
}
