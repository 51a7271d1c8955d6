//! Completion-service clients: live HTTP, replay from disk, and a recorder
//! that captures live traffic as replay files.
//!
//! Replay files live at `{dir}/{sha256(prompt)}.json` and hold
//! `{"prompt": ..., "text": ..., "latency_ms": ...}`. Only `text` is
//! required.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model: String,
    pub max_tokens: u32,
}

/// Raw completion output, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompletionError {
    #[error("completion endpoint unreachable: {0}")]
    Unavailable(String),
    #[error("completion endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("completion response malformed: {0}")]
    BadResponse(String),
    #[error("no replay recorded for prompt digest {digest}")]
    ReplayMiss { digest: String },
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError>;
}

impl<T: CompletionClient + ?Sized> CompletionClient for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        (**self).complete(request)
    }
}

impl<T: CompletionClient + ?Sized> CompletionClient for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        (**self).complete(request)
    }
}

/// Digest used to key replay files.
pub fn prompt_digest(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpClientConfig {
    pub base_url: String,
    pub model: String,
    pub max_tokens: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// JSON pointer to the completion text in the response body.
    pub text_path: String,
    pub timeout_ms: u64,
    /// Minimum spacing between requests to the endpoint.
    pub min_interval_ms: u64,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        HttpClientConfig {
            base_url: "http://127.0.0.1:8000/v1/completions".into(),
            model: "default".into(),
            max_tokens: 512,
            api_key_env: "CLAUSEWISE_API_KEY".into(),
            text_path: "/choices/0/text".into(),
            timeout_ms: 30_000,
            min_interval_ms: 0,
        }
    }
}

pub struct HttpCompletionClient {
    config: HttpClientConfig,
    agent: ureq::Agent,
    last_call: Mutex<Option<Instant>>,
}

impl HttpCompletionClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpCompletionClient {
            config,
            agent,
            last_call: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        // Serializes calls to the endpoint.
        let mut last = self.last_call.lock().expect("rate limiter poisoned");
        let gap = Duration::from_millis(self.config.min_interval_ms);
        if let Some(prev) = *last {
            if prev.elapsed() < gap {
                std::thread::sleep(gap - prev.elapsed());
            }
        }
        let started = Instant::now();
        *last = Some(started);

        let body = serde_json::json!({
            "model": request.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
        })
        .to_string();
        let mut call = self
            .agent
            .post(&self.config.base_url)
            .header("Content-Type", "application/json");
        if let Ok(token) = std::env::var(&self.config.api_key_env) {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let response = call
            .send(body.as_bytes())
            .map_err(|e| CompletionError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let raw = response
            .into_body()
            .read_to_string()
            .map_err(|e| CompletionError::Unavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(CompletionError::Status { status, body: raw });
        }
        let json: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| CompletionError::BadResponse(e.to_string()))?;
        let text = json
            .pointer(&self.config.text_path)
            .and_then(|v| v.as_str())
            .ok_or_else(|| CompletionError::BadResponse(format!("no string at {}", self.config.text_path)))?;
        Ok(CompletionResponse {
            text: text.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ReplayRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    text: String,
    #[serde(default)]
    latency_ms: u64,
}

/// Serves recorded responses; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    dir: PathBuf,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayClient { dir: dir.into() }
    }

    pub fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.json", prompt_digest(prompt)))
    }

    /// Write a replay entry for `prompt`.
    pub fn record(&self, prompt: &str, text: &str) -> std::io::Result<PathBuf> {
        write_record(&self.dir, prompt, text, 0)
    }
}

fn write_record(dir: &Path, prompt: &str, text: &str, latency_ms: u64) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", prompt_digest(prompt)));
    let record = ReplayRecord {
        prompt: Some(prompt.to_string()),
        text: text.to_string(),
        latency_ms,
    };
    let json = serde_json::to_string_pretty(&record).map_err(std::io::Error::other)?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

impl CompletionClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        let path = self.path_for(&request.prompt);
        let raw = std::fs::read_to_string(&path).map_err(|_| CompletionError::ReplayMiss {
            digest: prompt_digest(&request.prompt),
        })?;
        let record: ReplayRecord =
            serde_json::from_str(&raw).map_err(|e| CompletionError::BadResponse(format!("{}: {e}", path.display())))?;
        Ok(CompletionResponse {
            text: record.text,
            latency_ms: record.latency_ms,
        })
    }
}

/// Forwards to a live client and saves every response as a replay file.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        RecordingClient { inner, dir: dir.into() }
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        let response = self.inner.complete(request)?;
        if let Err(e) = write_record(&self.dir, &request.prompt, &response.text, response.latency_ms) {
            tracing::warn!(error = %e, "could not write replay file");
        }
        Ok(response)
    }
}
