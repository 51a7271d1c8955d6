//! Clause annotation backends.
//!
//! Two backends ship: a deterministic phrase lexicon ([`LexiconBackend`]) and
//! a completion-service adapter ([`LlmBackend`]). Whatever a backend returns
//! is validated against the schema in [`annotate_policy`]; output that fails
//! validation is recorded as ambiguous.

mod client;
mod lexicon;
mod llm;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

pub use client::{
    CompletionClient, CompletionError, CompletionRequest, CompletionResponse, HttpClientConfig, HttpCompletionClient,
    RecordingClient, ReplayClient,
};
pub use lexicon::{find_phrase, Lexicon, LexiconBackend, LexiconEntry, LexiconError};
pub use llm::{extract_json_object, LlmBackend, LlmOptions, PromptTemplate, SummaryBackend};

use crate::schema::{validate_against_ids, CandidateAnnotation, CategoryVocabulary, ClauseAnnotation};
use crate::segmenter::Segment;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotatorError {
    #[error("annotation backend unavailable: {0}")]
    BackendUnavailable(String),
}

pub trait AnnotatorBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Annotate one segment. The candidate must carry the segment's id.
    fn annotate_segment(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError>;
}

/// Uses `primary`, switching to `fallback` per segment when the primary
/// reports itself unavailable.
pub struct FallbackBackend<P, F> {
    pub primary: P,
    pub fallback: F,
    name: String,
}

impl<P: AnnotatorBackend, F: AnnotatorBackend> FallbackBackend<P, F> {
    pub fn new(primary: P, fallback: F) -> Self {
        let name = format!("{}+{}", primary.name(), fallback.name());
        FallbackBackend {
            primary,
            fallback,
            name,
        }
    }
}

impl<P: AnnotatorBackend, F: AnnotatorBackend> AnnotatorBackend for FallbackBackend<P, F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        match self.primary.annotate_segment(segment, vocab) {
            Err(AnnotatorError::BackendUnavailable(reason)) => {
                tracing::warn!(segment = %segment.id, %reason, "primary backend unavailable, falling back");
                self.fallback.annotate_segment(segment, vocab)
            }
            ok => ok,
        }
    }
}

impl<T: AnnotatorBackend + ?Sized> AnnotatorBackend for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        (**self).annotate_segment(segment, vocab)
    }
}

impl<T: AnnotatorBackend + ?Sized> AnnotatorBackend for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        (**self).annotate_segment(segment, vocab)
    }
}

/// Annotations for a whole policy plus how many were degraded to ambiguous
/// because the backend output failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyAnnotations {
    pub annotations: Vec<ClauseAnnotation>,
    pub degraded: usize,
}

/// Annotate every segment independently, preserving order.
///
/// `parallelism` bounds the number of segments in flight; 1 runs serially.
pub fn annotate_policy<B: AnnotatorBackend + ?Sized>(
    segments: &[Segment],
    backend: &B,
    vocab: &CategoryVocabulary,
    parallelism: usize,
) -> Result<PolicyAnnotations, AnnotatorError> {
    let ids: HashSet<&str> = segments.iter().map(|s| s.id.as_str()).collect();
    let degraded = AtomicUsize::new(0);
    let one = |segment: &Segment| -> Result<ClauseAnnotation, AnnotatorError> {
        let mut candidate = backend.annotate_segment(segment, vocab)?;
        if candidate.backend.is_empty() {
            candidate.backend = backend.name().to_string();
        }
        // A backend may not relabel a different segment.
        candidate.segment_id = segment.id.clone();
        match validate_against_ids(&candidate, vocab, &ids) {
            Ok(a) => Ok(a),
            Err(e) => {
                tracing::warn!(segment = %segment.id, error = %e, "backend output rejected");
                degraded.fetch_add(1, Ordering::Relaxed);
                Ok(ClauseAnnotation::ambiguous(&segment.id, candidate.backend))
            }
        }
    };

    let annotations = if parallelism <= 1 || segments.len() <= 1 {
        segments.iter().map(one).collect::<Result<Vec<_>, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| AnnotatorError::BackendUnavailable(e.to_string()))?;
        pool.install(|| segments.par_iter().map(one).collect::<Result<Vec<_>, _>>())?
    };
    Ok(PolicyAnnotations {
        annotations,
        degraded: degraded.into_inner(),
    })
}
