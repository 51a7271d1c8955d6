//! Analysis store, HTTP API and command-line plumbing around
//! `clausewise-core`.

pub mod api;
pub mod config;
pub mod pipeline;
pub mod record;
pub mod store;

pub use config::{BackendKind, Config};
pub use pipeline::{Analysis, AnalyzeError, AnalyzeInput, Analyzer, Stage};
pub use record::{AnalysisRecord, DomainReport};
pub use store::Store;
