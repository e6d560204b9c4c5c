//! Pluggable completion backends: a chat-completion HTTP endpoint, a
//! deterministic simulated respondent, and a content-addressed reply cache
//! that wraps either.

mod cache;
mod http;
mod simulated;

pub use cache::{CachedBackend, ResponseCache};
pub use http::{HttpBackend, RetryPolicy};
pub use simulated::{SimulatedBackend, SimulatedRespondentConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::Approach;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication failed (status {0})")]
    Auth(u16),
    #[error("endpoint returned status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: String },
    #[error("simulated backend knows no respondent `{0}`")]
    UnknownRespondent(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Why a request is being made; persona construction and survey answering run
/// through the same backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestPurpose {
    Answer,
    Persona,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTag {
    pub respondent_id: String,
    pub approach: Approach,
    pub template_version: String,
    pub purpose: RequestPurpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
}

/// Model, sampling, and length settings shared by a run's requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDefaults {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        Self {
            model: "gpt-4o".to_string(),
            // temperature 0 keeps repeated pre-test runs reproducible
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// A completion backend safe for concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    /// Stable description of the backend for manifests and fingerprints.
    fn identity(&self) -> String;

    /// Extra cache-key material for backends whose replies depend on more
    /// than the prompt content. The HTTP backend leaves this empty (identical
    /// prompts at fixed temperature mean identical replies); the simulated
    /// backend keys on the request tag.
    fn cache_discriminator(&self, _request: &CompletionRequest) -> String {
        String::new()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn cache_discriminator(&self, request: &CompletionRequest) -> String {
        (**self).cache_discriminator(request)
    }
}
