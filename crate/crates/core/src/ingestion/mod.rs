//! Policy ingestion: link discovery, polite fetching and main-text extraction.

mod curated;
mod discover;
mod extract;
mod fetch;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use curated::{CuratedMapError, CuratedPolicyMap};
pub use discover::{discover_policy_url, PRIVACY_LINK_PATTERNS};
pub use extract::{extract_text, extract_text_with, BoilerplateRules, ExtractedText};
pub use fetch::{FetchConfig, FetchError, FetchedPolicy, Fetcher};

use crate::text::sha256_hex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported content type {0:?}")]
    UnsupportedFormat(String),
    #[error("PDF has no text layer (scanned documents are not supported)")]
    NoTextLayer,
    #[error("malformed PDF: {0}")]
    MalformedPdf(String),
    #[error("body is not valid UTF-8 text")]
    InvalidEncoding,
}

/// Where a policy came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySource {
    pub url: Option<String>,
    pub domain: String,
    pub fetched_at: DateTime<Utc>,
    pub content_type: String,
    pub raw_bytes_hash: String,
}

impl PolicySource {
    /// Source metadata for a fetched URL. The domain is the registrable domain
    /// of the URL's host.
    pub fn for_url(url: &Url, content_type: &str, body: &[u8]) -> Result<Self, IngestError> {
        let host = url
            .host_str()
            .ok_or_else(|| IngestError::InvalidInput(format!("URL {url} has no host")))?;
        Ok(PolicySource {
            url: Some(url.to_string()),
            domain: registrable_domain(host),
            fetched_at: Utc::now(),
            content_type: content_type.to_string(),
            raw_bytes_hash: sha256_hex(body),
        })
    }

    /// Source metadata for a locally supplied body.
    pub fn local(domain: &str, content_type: &str, body: &[u8]) -> Result<Self, IngestError> {
        let domain = domain.trim().to_ascii_lowercase();
        if domain.is_empty() {
            return Err(IngestError::InvalidInput("domain must be non-empty".into()));
        }
        Ok(PolicySource {
            url: None,
            domain,
            fetched_at: Utc::now(),
            content_type: content_type.to_string(),
            raw_bytes_hash: sha256_hex(body),
        })
    }
}

/// Lowercased registrable domain (eTLD+1) for a host; IP addresses and hosts
/// without a known suffix are returned lowercased as-is.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
        return host;
    }
    match psl::domain_str(&host) {
        Some(d) => d.to_string(),
        None => host,
    }
}

/// A heading found during extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionHeader {
    pub depth: u8,
    pub text: String,
    /// Char offset of the heading line in [`PolicyDocument::text`].
    pub offset: usize,
}

/// Normalized main text of one policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub source: PolicySource,
    pub text: String,
    pub section_headers: Vec<SectionHeader>,
    pub content_hash: String,
}

impl PolicyDocument {
    pub fn new(source: PolicySource, extracted: ExtractedText) -> Self {
        PolicyDocument {
            content_hash: sha256_hex(extracted.text.as_bytes()),
            source,
            text: extracted.text,
            section_headers: extracted.section_headers,
        }
    }

    /// Extract and wrap a body in one step.
    pub fn from_body(source: PolicySource, body: &[u8], content_type: &str) -> Result<Self, IngestError> {
        Ok(Self::new(source, extract_text(body, content_type)?))
    }
}
