//! Content-addressed reply cache: one JSON file per request hash.
//!
//! Keys hash the full prompt together with model, temperature, and template
//! version, so any template edit invalidates its cached replies naturally.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, CompletionRequest};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request_fingerprint: String,
    reply: String,
    timestamp: u64,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(e.to_string()))?;
        Ok(Self {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn key(request: &CompletionRequest) -> String {
        Self::key_with(request, "")
    }

    /// Content hash of (model, prompt, temperature, template version), plus
    /// whatever extra material the backend's replies depend on.
    pub fn key_with(request: &CompletionRequest, discriminator: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(request.model.as_bytes());
        hasher.update([0x1f]);
        hasher.update(request.prompt.as_bytes());
        hasher.update([0x1f]);
        hasher.update(request.temperature.to_bits().to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(request.tag.template_version.as_bytes());
        hasher.update([0x1f]);
        hasher.update(discriminator.as_bytes());
        hex::encode(hasher.finalize())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, request: &CompletionRequest) -> Option<String> {
        self.get_by_key(&Self::key(request))
    }

    pub fn get_by_key(&self, key: &str) -> Option<String> {
        let raw = std::fs::read_to_string(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&raw).ok()?;
        self.hits.fetch_add(1, Ordering::Relaxed);
        Some(entry.reply)
    }

    pub fn put(&self, request: &CompletionRequest, reply: &str) -> Result<(), BackendError> {
        let key = Self::key(request);
        self.put_by_key(&key, request, reply)
    }

    pub fn put_by_key(
        &self,
        key: &str,
        request: &CompletionRequest,
        reply: &str,
    ) -> Result<(), BackendError> {
        self.misses.fetch_add(1, Ordering::Relaxed);
        let entry = CacheEntry {
            request_fingerprint: format!(
                "{}/{}/{}",
                request.tag.respondent_id, request.tag.approach, request.tag.template_version
            ),
            reply: reply.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string_pretty(&entry)
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        // write-then-rename keeps concurrent writers of the same key safe;
        // identical prompts across respondents make same-key races routine
        static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);
        let tmp = self.dir.join(format!(
            ".{key}.tmp.{}.{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, body).map_err(|e| BackendError::Cache(e.to_string()))?;
        std::fs::rename(&tmp, self.path_for(key))
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        Ok(())
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Wraps any backend with the file cache; repeated requests never reach the
/// inner backend again.
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn into_parts(self) -> (B, ResponseCache) {
        (self.inner, self.cache)
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = ResponseCache::key_with(request, &self.inner.cache_discriminator(request));
        if let Some(reply) = self.cache.get_by_key(&key) {
            return Ok(reply);
        }
        let reply = self.inner.complete(request)?;
        self.cache.put_by_key(&key, request, &reply)?;
        Ok(reply)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}
