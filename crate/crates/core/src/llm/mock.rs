//! Deterministic scripted backend for tests and offline runs.
//!
//! A script is an ordered list of response specs. Specs carrying a `match`
//! substring form a routing table consulted first (in script order) against
//! the concatenated message bodies and are never consumed; the k-th call that
//! matches no pattern consumes the k-th remaining ordered entry. Calls beyond
//! the script fail with `ScriptExhausted`. An entry with an empty `texts`
//! list makes the gateway report `EmptyResponse`, which is how tests inject
//! per-call failures.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, BackendReply, ChatBackend, ChatRequest};
use crate::prompts::Message;

/// One scripted response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    /// Substring routing pattern; entries with a pattern are reusable.
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_substring: Option<String>,
    /// Texts returned as the completion choices.
    pub texts: Vec<String>,
    /// Simulated latency before replying.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl MockSpec {
    pub fn texts<T: Into<String>>(texts: impl IntoIterator<Item = T>) -> Self {
        Self {
            match_substring: None,
            texts: texts.into_iter().map(Into::into).collect(),
            delay_ms: None,
        }
    }

    pub fn matching<T: Into<String>>(
        pattern: impl Into<String>,
        texts: impl IntoIterator<Item = T>,
    ) -> Self {
        Self {
            match_substring: Some(pattern.into()),
            texts: texts.into_iter().map(Into::into).collect(),
            delay_ms: None,
        }
    }

    pub fn with_delay_ms(mut self, delay_ms: u64) -> Self {
        self.delay_ms = Some(delay_ms);
        self
    }
}

/// A request exactly as the backend received it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: u32,
    pub seed: Option<u64>,
}

pub struct MockBackend {
    patterns: Vec<MockSpec>,
    ordered: Mutex<VecDeque<MockSpec>>,
    requests: Mutex<Vec<RecordedRequest>>,
}

impl MockBackend {
    pub fn new(script: impl IntoIterator<Item = MockSpec>) -> Self {
        let mut patterns = Vec::new();
        let mut ordered = VecDeque::new();
        for spec in script {
            if spec.match_substring.is_some() {
                patterns.push(spec);
            } else {
                ordered.push_back(spec);
            }
        }
        Self {
            patterns,
            ordered: Mutex::new(ordered),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Every request seen so far, in arrival order.
    pub fn recorded(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("mock poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().expect("mock poisoned").len()
    }
}

/// Builds a shareable scripted backend.
pub fn make_mock_backend(script: impl IntoIterator<Item = MockSpec>) -> Arc<MockBackend> {
    Arc::new(MockBackend::new(script))
}

impl ChatBackend for MockBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<BackendReply, BackendError> {
        self.requests
            .lock()
            .expect("mock poisoned")
            .push(RecordedRequest {
                messages: request.messages.to_vec(),
                model: request.model.to_owned(),
                temperature: request.temperature,
                max_tokens: request.max_tokens,
                n: request.n,
                seed: request.seed,
            });

        let joined = request
            .messages
            .iter()
            .map(|m| m.body.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let spec = self
            .patterns
            .iter()
            .find(|spec| {
                spec.match_substring
                    .as_deref()
                    .is_some_and(|pattern| joined.contains(pattern))
            })
            .cloned()
            .or_else(|| self.ordered.lock().expect("mock poisoned").pop_front());

        match spec {
            Some(spec) => {
                if let Some(delay_ms) = spec.delay_ms {
                    std::thread::sleep(std::time::Duration::from_millis(delay_ms));
                }
                Ok(BackendReply {
                    texts: spec.texts,
                    usage: None,
                })
            }
            None => Err(BackendError::ScriptExhausted),
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
}
