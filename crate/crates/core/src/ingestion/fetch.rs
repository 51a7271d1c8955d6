//! Polite HTTP fetching.
//!
//! Requests to one host go through a single queue. A request starts no
//! sooner than `per_host_delay` after the previous response to that host
//! arrived. Redirects are followed by hand so every hop uses the same queue.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures_util::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use url::Url;

use super::{IngestError, PolicySource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchConfig {
    pub timeout_ms: u64,
    pub max_body_bytes: usize,
    pub user_agent: String,
    pub per_host_delay_ms: u64,
    pub max_parallel: usize,
    pub max_redirects: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            timeout_ms: 15_000,
            max_body_bytes: 5 * 1024 * 1024,
            user_agent: concat!("clausewise/", env!("CARGO_PKG_VERSION")).to_string(),
            per_host_delay_ms: 1_000,
            max_parallel: 4,
            max_redirects: 5,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("{url}: invalid URL: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("{url}: request timed out")]
    Timeout { url: String },
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: body exceeds {limit} bytes")]
    TooLarge { url: String, limit: usize },
    #[error("{url}: more than {limit} redirects")]
    TooManyRedirects { url: String, limit: usize },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
}

impl FetchError {
    pub fn url(&self) -> &str {
        match self {
            FetchError::InvalidUrl { url, .. }
            | FetchError::Timeout { url }
            | FetchError::Status { url, .. }
            | FetchError::TooLarge { url, .. }
            | FetchError::TooManyRedirects { url, .. }
            | FetchError::Transport { url, .. } => url,
        }
    }
}

/// A successful fetch: source metadata plus the raw body.
#[derive(Debug, Clone)]
pub struct FetchedPolicy {
    pub source: PolicySource,
    pub body: Vec<u8>,
}

type HostSlot = Arc<tokio::sync::Mutex<Option<Instant>>>;

pub struct Fetcher {
    client: reqwest::Client,
    config: FetchConfig,
    hosts: Mutex<HashMap<String, HostSlot>>,
    permits: Semaphore,
}

impl Fetcher {
    pub fn new(config: FetchConfig) -> Result<Self, FetchError> {
        let client = reqwest::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(Duration::from_millis(config.timeout_ms))
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .map_err(|e| FetchError::Transport {
                url: String::new(),
                message: e.to_string(),
            })?;
        Ok(Fetcher {
            client,
            permits: Semaphore::new(config.max_parallel.max(1)),
            config,
            hosts: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &FetchConfig {
        &self.config
    }

    fn slot(&self, host: &str) -> HostSlot {
        let mut hosts = self.hosts.lock().expect("host table poisoned");
        hosts.entry(host.to_string()).or_default().clone()
    }

    /// Fetch one policy URL.
    pub async fn fetch(&self, url: &str) -> Result<FetchedPolicy, FetchError> {
        let mut current = Url::parse(url).map_err(|e| FetchError::InvalidUrl {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        if !matches!(current.scheme(), "http" | "https") || current.host_str().is_none() {
            return Err(FetchError::InvalidUrl {
                url: url.to_string(),
                reason: "expected an absolute http(s) URL".into(),
            });
        }

        let _permit = self.permits.acquire().await.expect("semaphore closed");
        let mut redirects = 0usize;
        loop {
            let response = self.send_polite(&current).await?;
            let status = response.status();
            if status.is_redirection() {
                if redirects == self.config.max_redirects {
                    return Err(FetchError::TooManyRedirects {
                        url: url.to_string(),
                        limit: self.config.max_redirects,
                    });
                }
                let location = response
                    .headers()
                    .get(reqwest::header::LOCATION)
                    .and_then(|v| v.to_str().ok())
                    .ok_or_else(|| FetchError::Transport {
                        url: current.to_string(),
                        message: format!("redirect {status} without Location"),
                    })?;
                current = current.join(location).map_err(|e| FetchError::InvalidUrl {
                    url: location.to_string(),
                    reason: e.to_string(),
                })?;
                redirects += 1;
                continue;
            }
            if status.as_u16() != 200 {
                return Err(FetchError::Status {
                    url: current.to_string(),
                    status: status.as_u16(),
                });
            }
            let content_type = response
                .headers()
                .get(reqwest::header::CONTENT_TYPE)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.split(';').next())
                .map(|v| v.trim().to_ascii_lowercase())
                .unwrap_or_else(|| "application/octet-stream".to_string());
            let body = self.read_body(&current, response).await?;
            let source = PolicySource::for_url(&current, &content_type, &body).map_err(|e: IngestError| {
                FetchError::InvalidUrl {
                    url: current.to_string(),
                    reason: e.to_string(),
                }
            })?;
            return Ok(FetchedPolicy { source, body });
        }
    }

    /// Fetch several URLs with bounded parallelism; results keep input order.
    pub async fn fetch_all(&self, urls: &[String]) -> Vec<Result<FetchedPolicy, FetchError>> {
        join_all(urls.iter().map(|u| self.fetch(u))).await
    }

    async fn send_polite(&self, url: &Url) -> Result<reqwest::Response, FetchError> {
        let host = url.host_str().unwrap_or_default().to_ascii_lowercase();
        let slot = self.slot(&host);
        let delay = Duration::from_millis(self.config.per_host_delay_ms);
        // The slot stays locked until headers arrive, and the delay counts from
        // that moment, so the server never sees two starts closer than `delay`.
        let mut last = slot.lock().await;
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < delay {
                tokio::time::sleep(delay - elapsed).await;
            }
        }
        let result = self.client.get(url.clone()).send().await;
        *last = Some(Instant::now());
        result.map_err(|e| classify(url, e))
    }

    async fn read_body(&self, url: &Url, mut response: reqwest::Response) -> Result<Vec<u8>, FetchError> {
        let limit = self.config.max_body_bytes;
        if response.content_length().is_some_and(|n| n as usize > limit) {
            return Err(FetchError::TooLarge {
                url: url.to_string(),
                limit,
            });
        }
        let mut body = Vec::new();
        while let Some(chunk) = response.chunk().await.map_err(|e| classify(url, e))? {
            if body.len() + chunk.len() > limit {
                return Err(FetchError::TooLarge {
                    url: url.to_string(),
                    limit,
                });
            }
            body.extend_from_slice(&chunk);
        }
        Ok(body)
    }
}

fn classify(url: &Url, e: reqwest::Error) -> FetchError {
    if e.is_timeout() {
        FetchError::Timeout { url: url.to_string() }
    } else {
        FetchError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        }
    }
}
