//! OpenAI chat-completions HTTP backend.
//!
//! POSTs `{base_url}/chat/completions` with the standard request JSON and
//! reads choices from `choices[*].message.content`. The API key comes from
//! the environment variable named in the config; an empty value means a
//! keyless local endpoint and no Authorization header is sent.

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, BackendReply, ChatBackend, ChatRequest, LlmError, Usage};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn from_config(config: &super::LLMConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| LlmError::MissingApiKey {
            var: config.api_key_env.clone(),
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|err| LlmError::InvalidConfig {
                field: "timeout".into(),
                detail: err.to_string(),
            })?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_owned(),
            api_key: (!key.is_empty()).then_some(key),
        })
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<BackendReply, BackendError> {
        let wire = WireRequest {
            model: request.model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.as_str(),
                    content: &m.body,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            n: request.n,
            seed: request.seed,
        };
        // serde_json is deterministic for a fixed struct, so every retry of
        // this logical call serializes to byte-identical body content.
        let body = serde_json::to_vec(&wire).expect("wire request serializes");

        let mut builder = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }

        let response = builder.send().map_err(|err| BackendError::Transient {
            status: None,
            detail: err.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|err| BackendError::Transient {
            status: Some(status),
            detail: err.to_string(),
        })?;

        match status {
            200..=299 => {
                let parsed: WireResponse =
                    serde_json::from_str(&text).map_err(|err| BackendError::Transient {
                        status: Some(status),
                        detail: format!("unparseable response body: {err}"),
                    })?;
                Ok(BackendReply {
                    texts: parsed
                        .choices
                        .into_iter()
                        .map(|choice| choice.message.content)
                        .collect(),
                    usage: parsed.usage.map(|usage| Usage {
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens,
                    }),
                })
            }
            401 | 403 => Err(BackendError::Auth { status }),
            429 => Err(BackendError::Transient {
                status: Some(status),
                detail: truncate(&text),
            }),
            500..=599 => Err(BackendError::Transient {
                status: Some(status),
                detail: truncate(&text),
            }),
            other => Err(BackendError::BadRequest {
                status: other,
                detail: truncate(&text),
            }),
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 512;
    if text.len() <= LIMIT {
        text.to_owned()
    } else {
        let mut end = LIMIT;
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &text[..end])
    }
}
