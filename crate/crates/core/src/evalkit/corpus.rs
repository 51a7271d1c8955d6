//! Annotated corpus, stored as JSONL with one policy per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::RiskLevel;
use crate::schema::{validate_annotation, CandidateAnnotation, CategoryVocabulary, ClauseAnnotation};
use crate::segmenter::Segment;
use crate::text::char_len;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub policy_id: String,
    pub segments: Vec<Segment>,
    /// One annotation per segment, in segment order.
    pub gold: Vec<ClauseAnnotation>,
    pub risk_level: RiskLevel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotatedCorpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<String>,
}

impl AnnotatedCorpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gold_levels(&self) -> BTreeMap<String, RiskLevel> {
        self.entries
            .iter()
            .map(|e| (e.policy_id.clone(), e.risk_level))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} invalid corpus line(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<LineError>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    id: String,
    text: String,
    #[serde(default)]
    section_path: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    policy_id: String,
    segments: Vec<RawSegment>,
    #[serde(default)]
    gold: Vec<CandidateAnnotation>,
    risk_level: String,
}

#[derive(Serialize)]
struct OutEntry<'a> {
    policy_id: &'a str,
    segments: Vec<RawSegment>,
    gold: &'a [ClauseAnnotation],
    risk_level: RiskLevel,
}

/// Segments get offsets as if their texts were joined by blank lines.
fn to_segments(raw: Vec<RawSegment>) -> Vec<Segment> {
    let mut start = 0;
    raw.into_iter()
        .map(|r| {
            let end = start + char_len(&r.text);
            let s = Segment {
                id: r.id,
                text: r.text,
                section_path: r.section_path,
                start,
                end,
            };
            start = end + 2;
            s
        })
        .collect()
}

fn parse_entry(line: &str, vocab: &CategoryVocabulary) -> Result<CorpusEntry, String> {
    let raw: RawEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let risk_level = raw.risk_level.parse::<RiskLevel>()?;
    let segments = to_segments(raw.segments);
    let mut seen = HashSet::new();
    if let Some(s) = segments.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(format!("duplicate segment id {:?}", s.id));
    }

    let mut by_segment: BTreeMap<String, ClauseAnnotation> = BTreeMap::new();
    for candidate in raw.gold {
        let a = validate_annotation(&candidate, vocab, &segments)
            .map_err(|e| format!("gold annotation for {:?}: {e}", candidate.segment_id))?;
        if by_segment.insert(a.segment_id.clone(), a).is_some() {
            return Err(format!("more than one gold annotation for {:?}", candidate.segment_id));
        }
    }
    // Segments without a gold annotation carry no labels.
    let gold = segments
        .iter()
        .map(|s| {
            by_segment
                .remove(&s.id)
                .unwrap_or_else(|| ClauseAnnotation::ambiguous(&s.id, "gold"))
        })
        .collect();
    Ok(CorpusEntry {
        policy_id: raw.policy_id,
        segments,
        gold,
        risk_level,
    })
}

/// Parse corpus JSONL. Every bad line is reported, not just the first.
pub fn parse_corpus(text: &str, vocab: &CategoryVocabulary) -> Result<AnnotatedCorpus, CorpusError> {
    let mut corpus = AnnotatedCorpus::default();
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        match parse_entry(line, vocab) {
            Ok(e) if !ids.insert(e.policy_id.clone()) => errors.push(LineError {
                line: line_no,
                message: format!("duplicate policy id {:?}", e.policy_id),
            }),
            Ok(e) => corpus.entries.push(e),
            Err(message) => errors.push(LineError { line: line_no, message }),
        }
    }
    if !errors.is_empty() {
        return Err(CorpusError::Invalid(errors));
    }
    if corpus.entries.is_empty() {
        corpus.warnings.push("corpus is empty".into());
        tracing::warn!("corpus is empty");
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path, vocab: &CategoryVocabulary) -> Result<AnnotatedCorpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut corpus = parse_corpus(&text, vocab)?;
    corpus.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(corpus)
}

/// Serialize entries back to JSONL.
pub fn write_corpus(entries: &[CorpusEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let line = OutEntry {
            policy_id: &e.policy_id,
            segments: e
                .segments
                .iter()
                .map(|s| RawSegment {
                    id: s.id.clone(),
                    text: s.text.clone(),
                    section_path: s.section_path.clone(),
                })
                .collect(),
            gold: &e.gold,
            risk_level: e.risk_level,
        };
        out.push_str(&serde_json::to_string(&line).expect("corpus entries serialize"));
        out.push('\n');
    }
    out
}
