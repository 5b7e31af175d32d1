//! Text-completion backends: an HTTP client for completion-style APIs and
//! a deterministic scripted backend for tests.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Name of the environment variable holding the API credential.
pub const API_KEY_ENV: &str = "DR3_LLM_API_KEY";

/// Default JSON-pointer path to the generated text in an HTTP response.
pub const DEFAULT_TEXT_POINTER: &str = "/choices/0/text";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("api error (status {status}): {body}")]
    Api { status: u16, body: String },
    #[error("no completion text at JSON pointer {pointer:?}")]
    ResponseFormat { pointer: String },
    #[error("script exhausted after {consumed} completions")]
    ScriptExhausted { consumed: usize },
    #[error("script entry {index} expected marker {marker:?} in the prompt")]
    ScriptMismatch { index: usize, marker: String },
    #[error("could not read script: {0}")]
    ScriptLoad(String),
}

/// One completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    /// A request with the defaults the agent uses: 512 tokens, greedy
    /// decoding.
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            stop_sequences: Vec::new(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn with_stops<S: Into<String>>(mut self, stops: impl IntoIterator<Item = S>) -> Self {
        self.stop_sequences = stops.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be non-negative".into());
        }
        Ok(())
    }
}

/// Uniform completion interface over real and scripted model backends.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

/// One scripted response. When `match_marker` is set, the prompt that
/// consumes this entry must contain the marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_marker: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(response: impl Into<String>) -> Self {
        ScriptEntry {
            match_marker: None,
            response: response.into(),
        }
    }

    pub fn matching(marker: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            match_marker: Some(marker.into()),
            response: response.into(),
        }
    }
}

/// Replays a fixed list of responses in order. Fully deterministic; one
/// consumer per instance.
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedBackend {
            entries,
            cursor: Mutex::new(0),
        }
    }

    /// Loads a script from a JSON file holding a list of
    /// `{"match": ..., "response": ...}` objects.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::ScriptLoad(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::ScriptLoad(format!("{}: {e}", path.display())))?;
        Ok(ScriptedBackend::new(entries))
    }

    /// A copy of this script with the cursor reset to the start.
    pub fn fresh(&self) -> Self {
        ScriptedBackend::new(self.entries.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// How many entries have been consumed so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.consumed()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self
            .entries
            .get(index)
            .ok_or(LlmError::ScriptExhausted { consumed: index })?;
        if let Some(marker) = &entry.match_marker {
            if !request.prompt.contains(marker.as_str()) {
                return Err(LlmError::ScriptMismatch {
                    index,
                    marker: marker.clone(),
                });
            }
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

/// Completion-style HTTP backend.
///
/// POSTs `{"model", "prompt", "max_tokens", "temperature", "stop"}` to the
/// configured URL and extracts the generated text at a JSON-pointer path.
/// Transport failures are retried with exponential backoff; well-formed
/// non-success responses are returned as errors without a retry.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    text_pointer: String,
    retry_limit: usize,
    backoff_base: Duration,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackend {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            text_pointer: DEFAULT_TEXT_POINTER.to_string(),
            retry_limit: 2,
            backoff_base: Duration::from_millis(500),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_text_pointer(mut self, pointer: impl Into<String>) -> Self {
        self.text_pointer = pointer.into();
        self
    }

    /// Sets the transport retry count and the first backoff delay. Each
    /// retry doubles the previous delay.
    pub fn with_retry(mut self, retry_limit: usize, backoff_base: Duration) -> Self {
        self.retry_limit = retry_limit;
        self.backoff_base = backoff_base;
        self
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<String, LlmError> {
        let mut req = self.client.post(&self.base_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(LlmError::Api {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|_| LlmError::ResponseFormat {
                pointer: self.text_pointer.clone(),
            })?;
        value
            .pointer(&self.text_pointer)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or(LlmError::ResponseFormat {
                pointer: self.text_pointer.clone(),
            })
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop": request.stop_sequences,
        });
        let mut delay = self.backoff_base;
        for attempt in 0..=self.retry_limit {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err(LlmError::Transport { message, .. }) => {
                    if attempt == self.retry_limit {
                        return Err(LlmError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(other) => return Err(other),
            }
        }
        unreachable!("retry loop always returns")
    }
}
