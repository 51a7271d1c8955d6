use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;
use url::Url;

use super::registrable_domain;

#[derive(Debug, Error)]
pub enum CuratedMapError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: entry {domain:?} has a non-absolute URL {url:?}")]
    BadUrl { path: String, domain: String, url: String },
}

/// User-supplied `domain -> policy URL` map, a JSON object.
#[derive(Debug, Clone, Default)]
pub struct CuratedPolicyMap {
    entries: BTreeMap<String, Url>,
}

impl CuratedPolicyMap {
    pub fn load(path: &Path) -> Result<Self, CuratedMapError> {
        let p = path.display().to_string();
        let raw = std::fs::read_to_string(path).map_err(|source| CuratedMapError::Io {
            path: p.clone(),
            source,
        })?;
        let map: BTreeMap<String, String> = serde_json::from_str(&raw).map_err(|source| CuratedMapError::Parse {
            path: p.clone(),
            source,
        })?;
        let mut entries = BTreeMap::new();
        for (domain, url) in map {
            let parsed = Url::parse(&url)
                .ok()
                .filter(|u| u.host_str().is_some())
                .ok_or_else(|| CuratedMapError::BadUrl {
                    path: p.clone(),
                    domain: domain.clone(),
                    url: url.clone(),
                })?;
            entries.insert(registrable_domain(&domain), parsed);
        }
        Ok(CuratedPolicyMap { entries })
    }

    pub fn lookup(&self, host: &str) -> Option<&Url> {
        self.entries.get(&registrable_domain(host))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
