//! Completion-backed annotation.
//!
//! The model sees the clause and the full vocabulary listing and must answer
//! with one JSON object. Text around the first balanced object is ignored.
//! Output that does not parse or does not validate is retried with a
//! correction note appended to the prompt; after the last retry the segment
//! is marked ambiguous.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;

use super::client::{CompletionClient, CompletionError, CompletionRequest};
use super::lexicon::Lexicon;
use super::{AnnotatorBackend, AnnotatorError};
use crate::schema::{
    validate_against_ids, CandidateAnnotation, CategoryVocabulary, ClauseAnnotation, Dimension, Label,
};
use crate::segmenter::Segment;

const DEFAULT_PROMPT: &str = include_str!("../../data/prompt_template.txt");
const DEFAULT_SUMMARY_PROMPT: &str = include_str!("../../data/summary_prompt_template.txt");

const SEGMENT_SLOT: &str = "{{segment}}";
const VOCABULARY_SLOT: &str = "{{vocabulary}}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn annotation_default() -> Self {
        PromptTemplate {
            text: DEFAULT_PROMPT.to_string(),
        }
    }

    pub fn summary_default() -> Self {
        PromptTemplate {
            text: DEFAULT_SUMMARY_PROMPT.to_string(),
        }
    }

    /// A template must contain `{{segment}}`; annotation templates also need
    /// `{{vocabulary}}`.
    pub fn new(text: impl Into<String>, needs_vocabulary: bool) -> Result<Self, String> {
        let text = text.into();
        if !text.contains(SEGMENT_SLOT) {
            return Err(format!("prompt template lacks {SEGMENT_SLOT}"));
        }
        if needs_vocabulary && !text.contains(VOCABULARY_SLOT) {
            return Err(format!("prompt template lacks {VOCABULARY_SLOT}"));
        }
        Ok(PromptTemplate { text })
    }

    pub fn load(path: &Path, needs_vocabulary: bool) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::new(text, needs_vocabulary)
    }

    pub fn render(&self, segment_text: &str, vocabulary_listing: &str) -> String {
        self.text
            .replace(VOCABULARY_SLOT, vocabulary_listing)
            .replace(SEGMENT_SLOT, segment_text)
    }
}

/// The first balanced `{...}` in `raw`, honouring JSON string escapes.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Deserialize)]
struct Payload {
    #[serde(default)]
    labels: Vec<(String, String)>,
    data_types: Option<Vec<String>>,
    recipients: Option<Vec<String>>,
    ambiguous: Option<bool>,
}

impl Payload {
    fn into_candidate(self, segment_id: &str, backend: &str) -> CandidateAnnotation {
        let of_dim = |dim: Dimension| {
            self.labels
                .iter()
                .filter(|(d, _)| d == dim.as_str())
                .map(|(_, l)| l.clone())
                .collect::<Vec<_>>()
        };
        let data_types = self.data_types.clone().unwrap_or_else(|| of_dim(Dimension::DataType));
        let recipients = self
            .recipients
            .clone()
            .unwrap_or_else(|| of_dim(Dimension::SharingRecipient));
        CandidateAnnotation {
            segment_id: segment_id.to_string(),
            ambiguous: self.ambiguous.unwrap_or(self.labels.is_empty()),
            labels: self.labels,
            data_types,
            recipients,
            backend: backend.to_string(),
        }
    }
}

fn parse_payload(raw: &str) -> Result<Payload, &'static str> {
    let object = extract_json_object(raw).ok_or("no JSON object found")?;
    serde_json::from_str(object).map_err(|_| "JSON object does not match the annotation format")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmOptions {
    pub model: String,
    pub max_tokens: u32,
    /// Extra attempts after an invalid response.
    pub retries: u32,
}

impl Default for LlmOptions {
    fn default() -> Self {
        LlmOptions {
            model: "default".into(),
            max_tokens: 512,
            retries: 1,
        }
    }
}

fn unavailable(e: CompletionError) -> AnnotatorError {
    AnnotatorError::BackendUnavailable(e.to_string())
}

pub struct LlmBackend<C> {
    client: C,
    template: PromptTemplate,
    options: LlmOptions,
    degraded: AtomicUsize,
}

impl<C: CompletionClient> LlmBackend<C> {
    pub const NAME: &'static str = "llm";

    pub fn new(client: C, template: PromptTemplate, options: LlmOptions) -> Self {
        LlmBackend {
            client,
            template,
            options,
            degraded: AtomicUsize::new(0),
        }
    }

    /// Number of segments marked ambiguous after exhausting retries.
    pub fn degraded_count(&self) -> usize {
        self.degraded.load(Ordering::Relaxed)
    }

    pub fn prompt_for(&self, segment: &Segment, vocab: &CategoryVocabulary) -> String {
        self.template.render(&segment.text, &vocab.listing())
    }

    /// Prompt for attempt `attempt` (1-based retry count) after `problem`.
    pub fn retry_prompt(base: &str, attempt: u32, problem: &str) -> String {
        format!(
            "{base}\n\nRetry {attempt}: your previous reply was rejected ({problem}). \
             Reply with one JSON object that uses only the allowed labels."
        )
    }

    fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            model: self.options.model.clone(),
            max_tokens: self.options.max_tokens,
        }
    }

    /// Annotate with schema validation, bounded retries and degradation to
    /// ambiguous.
    pub fn annotate_segment_llm(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<ClauseAnnotation, AnnotatorError> {
        let ids: HashSet<&str> = [segment.id.as_str()].into_iter().collect();
        let base = self.prompt_for(segment, vocab);
        let mut prompt = base.clone();
        for attempt in 0..=self.options.retries {
            let response = self.client.complete(&self.request(prompt)).map_err(unavailable)?;
            let problem = match parse_payload(&response.text) {
                Err(p) => p.to_string(),
                Ok(payload) => {
                    let candidate = payload.into_candidate(&segment.id, Self::NAME);
                    match validate_against_ids(&candidate, vocab, &ids) {
                        Ok(a) => return Ok(a),
                        Err(e) => e
                            .violations
                            .iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join("; "),
                    }
                }
            };
            tracing::debug!(segment = %segment.id, attempt, %problem, "invalid completion");
            prompt = Self::retry_prompt(&base, attempt + 1, &problem);
        }
        self.degraded.fetch_add(1, Ordering::Relaxed);
        Ok(ClauseAnnotation::ambiguous(&segment.id, Self::NAME))
    }

    /// Single attempt, no validation: labels with a known dimension are kept
    /// even when outside the vocabulary. Used to measure what the schema
    /// constraint buys.
    pub fn annotate_segment_unconstrained(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<ClauseAnnotation, AnnotatorError> {
        let response = self
            .client
            .complete(&self.request(self.prompt_for(segment, vocab)))
            .map_err(unavailable)?;
        let labels: BTreeSet<Label> = match parse_payload(&response.text) {
            Ok(p) => p
                .labels
                .into_iter()
                .filter_map(|(d, l)| d.parse::<Dimension>().ok().map(|d| Label::new(d, l)))
                .collect(),
            Err(_) => BTreeSet::new(),
        };
        Ok(ClauseAnnotation::from_labels(&segment.id, labels, Self::NAME))
    }
}

impl<C: CompletionClient> AnnotatorBackend for LlmBackend<C> {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        self.annotate_segment_llm(segment, vocab)
            .map(|a| CandidateAnnotation::from(&a))
    }
}

/// Free-text summarization mapped back to labels by lexicon matching over the
/// model's reply.
pub struct SummaryBackend<C> {
    client: C,
    template: PromptTemplate,
    lexicon: Lexicon,
    options: LlmOptions,
}

impl<C: CompletionClient> SummaryBackend<C> {
    pub const NAME: &'static str = "summarization";

    pub fn new(client: C, template: PromptTemplate, lexicon: Lexicon, options: LlmOptions) -> Self {
        SummaryBackend {
            client,
            template,
            lexicon,
            options,
        }
    }

    pub fn prompt_for(&self, segment: &Segment) -> String {
        self.template.render(&segment.text, "")
    }
}

impl<C: CompletionClient> AnnotatorBackend for SummaryBackend<C> {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        _vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        let response = self
            .client
            .complete(&CompletionRequest {
                prompt: self.prompt_for(segment),
                model: self.options.model.clone(),
                max_tokens: self.options.max_tokens,
            })
            .map_err(unavailable)?;
        let labels = self.lexicon.match_labels(&response.text);
        Ok(CandidateAnnotation::from(&ClauseAnnotation::from_labels(
            &segment.id,
            labels,
            Self::NAME,
        )))
    }
}
