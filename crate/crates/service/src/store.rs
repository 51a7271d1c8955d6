//! Directory-backed record store.
//!
//! Layout:
//!
//! ```text
//! {dir}/records/{analysis_id}.json   one AnalysisRecord each
//! {dir}/domains.json                 domain -> [{analysis_id, created_at}]
//! ```
//!
//! Files are replaced atomically (write to a temp file, then rename), so a
//! reader never sees a half-written document.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::record::AnalysisRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt document: {message}")]
    Corrupt { path: String, message: String },
    #[error("invalid analysis id {0:?}")]
    InvalidId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub analysis_id: String,
    pub created_at: DateTime<Utc>,
}

type DomainIndex = BTreeMap<String, Vec<IndexEntry>>;

pub struct Store {
    dir: PathBuf,
    index: RwLock<DomainIndex>,
    /// Held while a record and its index entry are written.
    write: Mutex<()>,
}

/// Ids are hex digests; anything else could escape the records directory.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io_err(parent))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let records = dir.join("records");
        std::fs::create_dir_all(&records).map_err(io_err(&records))?;
        let index_path = dir.join("domains.json");
        let index = match std::fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: index_path.display().to_string(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => DomainIndex::new(),
            Err(e) => return Err(io_err(&index_path)(e)),
        };
        Ok(Store {
            dir,
            index: RwLock::new(index),
            write: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.dir.join("records").join(format!("{id}.json"))
    }

    /// Store a record. Writing an id that already exists replaces the
    /// document; the domain index keeps one entry per id.
    pub fn put(&self, record: &AnalysisRecord) -> Result<(), StoreError> {
        if !valid_id(&record.analysis_id) {
            return Err(StoreError::InvalidId(record.analysis_id.clone()));
        }
        let mut bytes = serde_json::to_vec_pretty(record).expect("records serialize");
        bytes.push(b'\n');
        let _guard = self.write.lock().expect("store write lock poisoned");
        write_atomic(&self.record_path(&record.analysis_id), &bytes)?;

        let mut next = self.index.read().expect("index lock poisoned").clone();
        let entries = next.entry(record.domain.clone()).or_default();
        entries.retain(|e| e.analysis_id != record.analysis_id);
        entries.push(IndexEntry {
            analysis_id: record.analysis_id.clone(),
            created_at: record.created_at,
        });
        let mut index_bytes = serde_json::to_vec_pretty(&next).expect("index serializes");
        index_bytes.push(b'\n');
        write_atomic(&self.dir.join("domains.json"), &index_bytes)?;
        *self.index.write().expect("index lock poisoned") = next;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Option<AnalysisRecord>, StoreError> {
        if !valid_id(id) {
            return Ok(None);
        }
        let path = self.record_path(id);
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt {
                    path: path.display().to_string(),
                    message: e.to_string(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Newest record for a domain by `created_at`; among equal timestamps the
    /// one stored last wins.
    pub fn newest_for_domain(&self, domain: &str) -> Result<Option<AnalysisRecord>, StoreError> {
        let newest = {
            let index = self.index.read().expect("index lock poisoned");
            index.get(domain).and_then(|entries| {
                entries
                    .iter()
                    .enumerate()
                    .max_by_key(|(i, e)| (e.created_at, *i))
                    .map(|(_, e)| e.analysis_id.clone())
            })
        };
        match newest {
            Some(id) => self.get(&id),
            None => Ok(None),
        }
    }

    pub fn domains(&self) -> Vec<String> {
        self.index
            .read()
            .expect("index lock poisoned")
            .keys()
            .cloned()
            .collect()
    }
}
