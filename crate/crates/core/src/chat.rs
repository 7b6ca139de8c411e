//! Generic chat-completion interface shared by machine labelers and text
//! generation backends.

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChatError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend payload: {0}")]
    Payload(String),
    #[error("missing credential: environment variable `{0}` is not set")]
    MissingCredential(String),
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, system: &str, prompt: &str) -> Result<String, ChatError>;
}

/// Attempt count and exponential backoff (`base_delay * 2^attempt`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            Duration::ZERO
        } else {
            self.base_delay.saturating_mul(1 << (attempt - 1).min(16))
        }
    }

    /// Runs `op` until it succeeds or attempts are exhausted; returns the last
    /// error together with the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut() -> Result<T, E>) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            let delay = self.delay_before(attempt);
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt + 1 >= attempts => return Err((e, attempt + 1)),
                Err(_) => attempt += 1,
            }
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Replays canned replies in order, one per call; each prompt consumes the next
/// reply. Used for tests and for scripted offline runs.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Mutex<std::collections::VecDeque<Result<String, ChatError>>>,
}

impl ScriptedChat {
    pub fn new(replies: impl IntoIterator<Item = Result<String, ChatError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }

    pub fn always(reply: &str, n: usize) -> Self {
        Self::new((0..n).map(|_| Ok(reply.to_string())))
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("script lock").len()
    }
}

impl ChatClient for ScriptedChat {
    fn complete(&self, _system: &str, _prompt: &str) -> Result<String, ChatError> {
        self.replies
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(ChatError::Transport("script exhausted".into())))
    }
}

/// Answers from a fixed prompt -> reply table; unknown prompts fail.
#[derive(Debug, Default, Clone)]
pub struct LookupChat {
    pub table: HashMap<String, String>,
}

impl ChatClient for LookupChat {
    fn complete(&self, _system: &str, prompt: &str) -> Result<String, ChatError> {
        self.table
            .get(prompt)
            .cloned()
            .ok_or_else(|| ChatError::Transport("no scripted reply for prompt".into()))
    }
}

/// Client for any server exposing an OpenAI-style `/chat/completions` route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiCompatibleConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct OpenAiCompatibleClient {
    config: OpenAiCompatibleConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl OpenAiCompatibleClient {
    pub fn new(config: OpenAiCompatibleConfig) -> Result<Self, ChatError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ChatError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            http,
        })
    }
}

impl ChatClient for OpenAiCompatibleClient {
    fn complete(&self, system: &str, prompt: &str) -> Result<String, ChatError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.http.post(url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ChatError::Timeout
            } else {
                ChatError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ChatError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ChatError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ChatError::Payload(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ChatError::Payload("missing choices[0].message.content".into()))
    }
}
