//! Chat-completion HTTP backend with retry and exponential backoff.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{BackendError, CompletionBackend, CompletionRequest};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries beyond the first attempt.
    pub max_retries: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: usize) -> Duration {
        let factor = 1u32 << attempt.min(16) as u32;
        (self.base_delay * factor).min(self.max_delay)
    }
}

/// Speaks the chat-completion wire format (system + user message) against a
/// configurable base URL. The credential comes from `LLM_API_KEY` unless
/// supplied directly.
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    system_prompt: String,
    retry: RetryPolicy,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            system_prompt: crate::prompting::SYSTEM_PROMPT.trim().to_string(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Reads the credential from the `LLM_API_KEY` environment variable.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, BackendError> {
        let api_key = std::env::var("LLM_API_KEY")
            .map_err(|_| BackendError::Transport("LLM_API_KEY is not set".to_string()))?;
        Ok(Self::new(base_url, api_key))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .timeout(self.timeout)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(status)),
            _ => {
                let message = response.text().unwrap_or_default();
                return Err(BackendError::Http { status, message });
            }
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| BackendError::MalformedResponse("no choices in response".to_string()))
    }

    fn is_transient(error: &BackendError) -> bool {
        match error {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let attempts = self.retry.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            match self.attempt(request) {
                Ok(reply) => return Ok(reply),
                Err(error) if Self::is_transient(&error) => {
                    last = Some(error);
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.retry.delay(attempt));
                    }
                }
                Err(error) => return Err(error),
            }
        }
        Err(BackendError::RetriesExhausted {
            attempts,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    fn identity(&self) -> String {
        format!("http({})", self.base_url)
    }
}
