//! Privacy-policy analysis core.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`ingestion`]: discover, fetch and extract normalized policy text
//! - [`segmenter`]: split the text into paragraph and list-item clauses
//! - [`schema`]: the seven-dimension privacy schema and annotation validation
//! - [`annotator`]: lexicon and completion-backed clause labelling
//! - [`risk`]: feature extraction and the monotonic risk score
//! - [`explainer`]: clause-grounded explanations for fired risk features
//! - [`evalkit`]: corpus loading, clause-level metrics, ablations
//!
//! Everything except fetching and the completion client is a pure function of
//! its inputs.

pub mod annotator;
pub mod evalkit;
pub mod explainer;
pub mod ingestion;
pub mod risk;
pub mod schema;
pub mod segmenter;
pub mod text;

pub use annotator::{AnnotatorBackend, Lexicon, LexiconBackend, LlmBackend};
pub use explainer::{Explanation, ExplanationTemplates};
pub use ingestion::{PolicyDocument, PolicySource, SectionHeader};
pub use risk::{Feature, FeatureVector, RiskLevel, RiskReport, RiskWeights};
pub use schema::{CategoryVocabulary, ClauseAnnotation, Dimension, Label};
pub use segmenter::Segment;
