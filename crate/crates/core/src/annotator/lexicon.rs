//! Phrase-lexicon baseline backend.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotatorBackend, AnnotatorError};
use crate::schema::{CandidateAnnotation, CategoryVocabulary, ClauseAnnotation, Dimension, Label};
use crate::segmenter::Segment;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub pattern: String,
    pub dimension: Dimension,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub version: String,
    pub entries: Vec<LexiconEntry>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid lexicon JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("entry {index} ({pattern:?}): {dimension}/{label} is not in the vocabulary")]
    UnknownLabel {
        index: usize,
        pattern: String,
        dimension: Dimension,
        label: String,
    },
    #[error("entry {index}: pattern {pattern:?} must be non-empty lowercase text")]
    BadPattern { index: usize, pattern: String },
}

impl Lexicon {
    pub fn embedded() -> Self {
        serde_json::from_str(DEFAULT_LEXICON).expect("embedded lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&raw)?)
    }

    /// Every entry must be lowercase and point at a vocabulary label.
    pub fn validate(&self, vocab: &CategoryVocabulary) -> Result<(), LexiconError> {
        for (index, e) in self.entries.iter().enumerate() {
            if e.pattern.trim().is_empty() || e.pattern != e.pattern.to_lowercase() {
                return Err(LexiconError::BadPattern {
                    index,
                    pattern: e.pattern.clone(),
                });
            }
            if !vocab.contains(e.dimension, &e.label) {
                return Err(LexiconError::UnknownLabel {
                    index,
                    pattern: e.pattern.clone(),
                    dimension: e.dimension,
                    label: e.label.clone(),
                });
            }
        }
        Ok(())
    }

    /// Labels whose pattern occurs in `text` as a whole-word phrase.
    pub fn match_labels(&self, text: &str) -> BTreeSet<Label> {
        let haystack = fold(text);
        self.entries
            .iter()
            .filter(|e| find_phrase(&haystack, &e.pattern))
            .map(|e| Label::new(e.dimension, e.label.clone()))
            .collect()
    }
}

/// Lowercase, collapse whitespace and fold typographic apostrophes.
fn fold(text: &str) -> String {
    text.to_lowercase()
        .replace(['\u{2019}', '\u{2018}'], "'")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whole-word phrase search: `phrase` must occur in `haystack` with no word
/// character immediately before or after it. Both inputs are expected to be
/// lowercase already.
pub fn find_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    haystack.match_indices(phrase).any(|(i, m)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + m.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

pub struct LexiconBackend {
    lexicon: Lexicon,
}

impl LexiconBackend {
    pub const NAME: &'static str = "lexicon";

    pub fn new(lexicon: Lexicon, vocab: &CategoryVocabulary) -> Result<Self, LexiconError> {
        lexicon.validate(vocab)?;
        Ok(LexiconBackend { lexicon })
    }

    pub fn default_lexicon() -> Self {
        LexiconBackend {
            lexicon: Lexicon::embedded(),
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// The validated annotation for one segment. Ambiguous iff nothing matched.
    pub fn annotate(&self, segment: &Segment) -> ClauseAnnotation {
        ClauseAnnotation::from_labels(segment.id.clone(), self.lexicon.match_labels(&segment.text), Self::NAME)
    }
}

impl AnnotatorBackend for LexiconBackend {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn annotate_segment(
        &self,
        segment: &Segment,
        _vocab: &CategoryVocabulary,
    ) -> Result<CandidateAnnotation, AnnotatorError> {
        Ok(CandidateAnnotation::from(&self.annotate(segment)))
    }
}
