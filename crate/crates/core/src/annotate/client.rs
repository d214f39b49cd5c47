//! Client for OpenAI-compatible `/chat/completions` endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Mutex;
use tokio::time::Instant;

use super::prompt::Prompt;

pub const API_KEY_ENV: &str = "BWSQ_API_KEY";
pub const BASE_URL_ENV: &str = "BWSQ_BASE_URL";
pub const MODEL_ENV: &str = "BWSQ_MODEL";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Bearer token; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Client-side rate limit; `None` disables limiting.
    pub requests_per_minute: Option<u32>,
    pub timeout_secs: u64,
    /// Base delay for exponential backoff between transport retries.
    pub retry_backoff_ms: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            api_key: None,
            temperature: 0.0,
            max_retries: 3,
            parallelism: 4,
            requests_per_minute: None,
            timeout_secs: 120,
            retry_backoff_ms: 500,
        }
    }
}

impl LlmEndpointConfig {
    /// Defaults overridden by `BWSQ_BASE_URL`, `BWSQ_MODEL` and `BWSQ_API_KEY`.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            cfg.base_url = url;
        }
        if let Ok(model) = std::env::var(MODEL_ENV) {
            cfg.model_name = model;
        }
        cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        cfg
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.parallelism < 1 {
            return Err(LlmError::Config("parallelism must be >= 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model name must not be empty".into()));
        }
        if self.requests_per_minute == Some(0) {
            return Err(LlmError::Config("requests_per_minute must be > 0".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    Payload(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Token bucket shared by all requests against one endpoint.
pub struct RateLimiter {
    per_second: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32, burst: usize) -> Self {
        let capacity = burst.max(1) as f64;
        Self {
            per_second: requests_per_minute as f64 / 60.0,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Waits until a token is available and takes it.
    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().await;
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_second)
            };
            tokio::time::sleep(wait).await;
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

pub struct LlmClient {
    http: reqwest::Client,
    cfg: LlmEndpointConfig,
    limiter: Option<RateLimiter>,
}

impl LlmClient {
    pub fn new(cfg: LlmEndpointConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let limiter = cfg
            .requests_per_minute
            .map(|rpm| RateLimiter::new(rpm, cfg.parallelism));
        Ok(Self { http, cfg, limiter })
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.cfg
    }

    /// Sends one chat completion, retrying transport failures, 429 and 5xx.
    pub async fn chat(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match self.chat_once(prompt).await {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.cfg.max_retries => {
                    let delay = self.cfg.retry_backoff_ms.saturating_mul(1 << attempt.min(10));
                    tracing::debug!(error = %e, attempt, "retrying chat completion");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    async fn chat_once(&self, prompt: &Prompt) -> Result<String, LlmError> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire().await;
        }
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.cfg.temperature,
        });
        let mut req = self.http.post(self.cfg.endpoint()).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth {
                status: status.as_u16(),
                body: text,
            });
        }
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::Payload(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| LlmError::Payload("no choices in response".into()))
    }
}
