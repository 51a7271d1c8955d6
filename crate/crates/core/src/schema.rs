//! The privacy schema: seven fixed dimensions, a closed label vocabulary per
//! dimension, and validation of clause annotations against both.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmenter::Segment;

const DEFAULT_VOCABULARY: &str = include_str!("../data/vocabulary.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    DataType,
    CollectionContext,
    SharingRecipient,
    RetentionDeletion,
    TrackingTechnology,
    UserControl,
    Permission,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::DataType,
        Dimension::CollectionContext,
        Dimension::SharingRecipient,
        Dimension::RetentionDeletion,
        Dimension::TrackingTechnology,
        Dimension::UserControl,
        Dimension::Permission,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::DataType => "DataType",
            Dimension::CollectionContext => "CollectionContext",
            Dimension::SharingRecipient => "SharingRecipient",
            Dimension::RetentionDeletion => "RetentionDeletion",
            Dimension::TrackingTechnology => "TrackingTechnology",
            Dimension::UserControl => "UserControl",
            Dimension::Permission => "Permission",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One `(dimension, label)` pair. Serializes as a two-element array.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label(pub Dimension, pub String);

impl Label {
    pub fn new(dimension: Dimension, label: impl Into<String>) -> Self {
        Label(dimension, label.into())
    }

    pub fn dimension(&self) -> Dimension {
        self.0
    }

    pub fn name(&self) -> &str {
        &self.1
    }
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("{location}: cannot read vocabulary: {source}")]
    Io { location: String, source: std::io::Error },
    #[error("{location}: invalid vocabulary JSON at line {line}, column {column}: {message}")]
    Parse {
        location: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: duplicate label {label:?} under {dimension}")]
    DuplicateLabel {
        location: String,
        dimension: Dimension,
        label: String,
    },
    #[error("{location}: unknown dimension {name:?}")]
    UnknownDimension { location: String, name: String },
    #[error("{location}: missing dimension {dimension}")]
    MissingDimension { location: String, dimension: Dimension },
    #[error("{location}: label {label:?} is not lowercase snake_case")]
    MalformedLabel { location: String, label: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVocabulary {
    version: String,
    dimensions: serde_json::Map<String, serde_json::Value>,
}

/// Closed label sets per dimension. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryVocabulary {
    pub version: String,
    dimensions: BTreeMap<Dimension, Vec<String>>,
}

fn is_snake_case(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !label.starts_with('_')
        && !label.ends_with('_')
}

impl CategoryVocabulary {
    /// The vocabulary shipped with the crate.
    pub fn default_vocabulary() -> Self {
        Self::from_json_str(DEFAULT_VOCABULARY, "<embedded vocabulary>").expect("embedded vocabulary is valid")
    }

    /// Load from `path`, or the embedded default when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, VocabularyError> {
        match path {
            None => Ok(Self::default_vocabulary()),
            Some(p) => {
                let location = p.display().to_string();
                let raw = std::fs::read_to_string(p).map_err(|source| VocabularyError::Io {
                    location: location.clone(),
                    source,
                })?;
                Self::from_json_str(&raw, &location)
            }
        }
    }

    pub fn from_json_str(json: &str, location: &str) -> Result<Self, VocabularyError> {
        let raw: RawVocabulary = serde_json::from_str(json).map_err(|e| VocabularyError::Parse {
            location: location.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut dimensions = BTreeMap::new();
        for (name, value) in &raw.dimensions {
            let dimension: Dimension = name.parse().map_err(|name| VocabularyError::UnknownDimension {
                location: format!("{location}: dimensions"),
                name,
            })?;
            let labels: Vec<String> = serde_json::from_value(value.clone()).map_err(|e| VocabularyError::Parse {
                location: format!("{location}: dimensions.{name}"),
                line: 0,
                column: 0,
                message: e.to_string(),
            })?;
            let mut seen = HashSet::new();
            for (i, label) in labels.iter().enumerate() {
                let here = format!("{location}: dimensions.{name}[{i}]");
                if !is_snake_case(label) {
                    return Err(VocabularyError::MalformedLabel {
                        location: here,
                        label: label.clone(),
                    });
                }
                if !seen.insert(label.as_str()) {
                    return Err(VocabularyError::DuplicateLabel {
                        location: here,
                        dimension,
                        label: label.clone(),
                    });
                }
            }
            dimensions.insert(dimension, labels);
        }
        for dimension in Dimension::ALL {
            if !dimensions.contains_key(&dimension) {
                return Err(VocabularyError::MissingDimension {
                    location: location.to_string(),
                    dimension,
                });
            }
        }
        Ok(CategoryVocabulary {
            version: raw.version,
            dimensions,
        })
    }

    pub fn dimension_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn labels(&self, dimension: Dimension) -> &[String] {
        self.dimensions.get(&dimension).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, dimension: Dimension, label: &str) -> bool {
        self.labels(dimension).iter().any(|l| l == label)
    }

    /// Every `(dimension, label)` pair, in schema order.
    pub fn all_labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.dimensions
            .iter()
            .flat_map(|(d, ls)| ls.iter().map(move |l| Label::new(*d, l.clone())))
    }

    /// One line per dimension: `DataType: email, name, ...`.
    pub fn listing(&self) -> String {
        self.dimensions
            .iter()
            .map(|(d, ls)| format!("{d}: {}", ls.join(", ")))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A validated annotation for one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseAnnotation {
    pub segment_id: String,
    pub labels: BTreeSet<Label>,
    pub data_types: BTreeSet<String>,
    pub recipients: BTreeSet<String>,
    pub ambiguous: bool,
    pub backend: String,
}

impl ClauseAnnotation {
    pub fn ambiguous(segment_id: impl Into<String>, backend: impl Into<String>) -> Self {
        ClauseAnnotation {
            segment_id: segment_id.into(),
            labels: BTreeSet::new(),
            data_types: BTreeSet::new(),
            recipients: BTreeSet::new(),
            ambiguous: true,
            backend: backend.into(),
        }
    }

    /// Build from a label set, deriving `data_types`, `recipients` and the
    /// ambiguity flag from it.
    pub fn from_labels(segment_id: impl Into<String>, labels: BTreeSet<Label>, backend: impl Into<String>) -> Self {
        let pick = |dim: Dimension| {
            labels
                .iter()
                .filter(|l| l.0 == dim)
                .map(|l| l.1.clone())
                .collect::<BTreeSet<_>>()
        };
        let data_types = pick(Dimension::DataType);
        let recipients = pick(Dimension::SharingRecipient);
        ClauseAnnotation {
            segment_id: segment_id.into(),
            ambiguous: labels.is_empty(),
            labels,
            data_types,
            recipients,
            backend: backend.into(),
        }
    }

    pub fn has(&self, dimension: Dimension, label: &str) -> bool {
        self.labels.iter().any(|l| l.0 == dimension && l.1 == label)
    }

    pub fn has_any(&self, dimension: Dimension) -> bool {
        self.labels.iter().any(|l| l.0 == dimension)
    }
}

/// An annotation as produced by a backend, before validation. Dimensions are
/// plain strings so that out-of-schema output can be reported rather than
/// rejected at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateAnnotation {
    pub segment_id: String,
    #[serde(default)]
    pub labels: Vec<(String, String)>,
    #[serde(default)]
    pub data_types: Vec<String>,
    #[serde(default)]
    pub recipients: Vec<String>,
    #[serde(default)]
    pub ambiguous: bool,
    #[serde(default)]
    pub backend: String,
}

impl From<&ClauseAnnotation> for CandidateAnnotation {
    fn from(a: &ClauseAnnotation) -> Self {
        CandidateAnnotation {
            segment_id: a.segment_id.clone(),
            labels: a
                .labels
                .iter()
                .map(|l| (l.0.as_str().to_string(), l.1.clone()))
                .collect(),
            data_types: a.data_types.iter().cloned().collect(),
            recipients: a.recipients.iter().cloned().collect(),
            ambiguous: a.ambiguous,
            backend: a.backend.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownSegment { segment_id: String },
    UnknownDimension { dimension: String },
    UnknownLabel { dimension: String, label: String },
    AmbiguousWithLabels,
    UnambiguousWithoutLabels,
    DataTypeNotLabelled { label: String },
    RecipientNotLabelled { label: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownSegment { segment_id } => {
                write!(f, "unknown segment id {segment_id:?}")
            }
            Violation::UnknownDimension { dimension } => {
                write!(f, "unknown dimension {dimension:?}")
            }
            Violation::UnknownLabel { dimension, label } => {
                write!(f, "label {label:?} is not in the {dimension} vocabulary")
            }
            Violation::AmbiguousWithLabels => f.write_str("ambiguous annotation carries labels"),
            Violation::UnambiguousWithoutLabels => f.write_str("annotation has no labels but is not marked ambiguous"),
            Violation::DataTypeNotLabelled { label } => {
                write!(f, "data type {label:?} missing from labels")
            }
            Violation::RecipientNotLabelled { label } => {
                write!(f, "recipient {label:?} missing from labels")
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("annotation rejected: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

/// Check a candidate against the vocabulary and the segment list. Collects
/// every violation rather than stopping at the first.
pub fn validate_annotation(
    candidate: &CandidateAnnotation,
    vocab: &CategoryVocabulary,
    segments: &[Segment],
) -> Result<ClauseAnnotation, ValidationError> {
    let ids: HashSet<&str> = segments.iter().map(|s| s.id.as_str()).collect();
    validate_against_ids(candidate, vocab, &ids)
}

pub(crate) fn validate_against_ids(
    candidate: &CandidateAnnotation,
    vocab: &CategoryVocabulary,
    segment_ids: &HashSet<&str>,
) -> Result<ClauseAnnotation, ValidationError> {
    let mut violations = Vec::new();
    if !segment_ids.contains(candidate.segment_id.as_str()) {
        violations.push(Violation::UnknownSegment {
            segment_id: candidate.segment_id.clone(),
        });
    }

    let mut labels = BTreeSet::new();
    for (dim_name, label) in &candidate.labels {
        match dim_name.parse::<Dimension>() {
            Err(_) => violations.push(Violation::UnknownDimension {
                dimension: dim_name.clone(),
            }),
            Ok(dim) if !vocab.contains(dim, label) => violations.push(Violation::UnknownLabel {
                dimension: dim_name.clone(),
                label: label.clone(),
            }),
            Ok(dim) => {
                labels.insert(Label::new(dim, label.clone()));
            }
        }
    }

    let has_labels = !candidate.labels.is_empty();
    if candidate.ambiguous && has_labels {
        violations.push(Violation::AmbiguousWithLabels);
    }
    if !candidate.ambiguous && !has_labels {
        violations.push(Violation::UnambiguousWithoutLabels);
    }

    let data_types: BTreeSet<String> = candidate.data_types.iter().cloned().collect();
    for dt in &data_types {
        if !labels.contains(&Label::new(Dimension::DataType, dt.clone())) {
            violations.push(Violation::DataTypeNotLabelled { label: dt.clone() });
        }
    }
    let recipients: BTreeSet<String> = candidate.recipients.iter().cloned().collect();
    for r in &recipients {
        if !labels.contains(&Label::new(Dimension::SharingRecipient, r.clone())) {
            violations.push(Violation::RecipientNotLabelled { label: r.clone() });
        }
    }

    if violations.is_empty() {
        Ok(ClauseAnnotation {
            segment_id: candidate.segment_id.clone(),
            labels,
            data_types,
            recipients,
            ambiguous: candidate.ambiguous,
            backend: candidate.backend.clone(),
        })
    } else {
        Err(ValidationError { violations })
    }
}
