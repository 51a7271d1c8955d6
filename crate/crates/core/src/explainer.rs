//! Clause-grounded explanations for fired risk features.
//!
//! Template mode is deterministic. Llm mode asks the completion client to
//! rephrase the template text and keeps the rephrasing only if it still quotes
//! the policy verbatim; anything else falls back to the template.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{extract_json_object, CompletionClient, CompletionRequest, LlmOptions};
use crate::risk::{Contribution, Feature, RiskReport};
use crate::schema::{ClauseAnnotation, Dimension};
use crate::segmenter::Segment;
use crate::text::{char_len, take_chars};

const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.json");

pub const MAX_EXCERPT_CHARS: usize = 200;
pub const DEFAULT_MAX_SENTENCES: usize = 3;

const PLACEHOLDERS: [&str; 4] = ["data_types", "recipients", "labels", "excerpt"];

const REPHRASE_PROMPT: &str = "Rewrite the explanation below for a non-expert reader in at most \
{{max_sentences}} sentences. Do not add anything the clause does not say. Text inside double quotes must be copied \
exactly from the clause.\n\
Answer with one JSON object: {\"text\": \"...\", \"quoted_excerpt\": \"...\"}, where quoted_excerpt \
is an exact substring of the clause of at most 200 characters.\n\n\
Explanation: {{explanation}}\n\nClause: {{clause}}\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationSource {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub feature_name: Feature,
    pub text: String,
    pub grounded_segments: Vec<String>,
    pub quoted_excerpt: String,
    pub source: ExplanationSource,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read templates {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid template JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("no template for feature {0}")]
    Missing(Feature),
    #[error("template for {feature} uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { feature: Feature, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationTemplates {
    templates: BTreeMap<Feature, String>,
}

impl ExplanationTemplates {
    pub fn embedded() -> Self {
        Self::from_json_str(DEFAULT_TEMPLATES).expect("embedded templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let raw = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&raw)
    }

    pub fn from_json_str(json: &str) -> Result<Self, TemplateError> {
        let templates: BTreeMap<Feature, String> = serde_json::from_str(json)?;
        for f in Feature::ALL {
            let t = templates.get(&f).ok_or(TemplateError::Missing(f))?;
            if let Some(name) = placeholders(t).find(|p| !PLACEHOLDERS.contains(p)) {
                return Err(TemplateError::UnknownPlaceholder {
                    feature: f,
                    name: name.to_string(),
                });
            }
        }
        Ok(ExplanationTemplates { templates })
    }

    pub fn get(&self, feature: Feature) -> &str {
        &self.templates[&feature]
    }
}

impl Default for ExplanationTemplates {
    fn default() -> Self {
        Self::embedded()
    }
}

/// `{name}` tokens where name is a lowercase identifier.
fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    template.split('{').skip(1).filter_map(|rest| {
        let name = &rest[..rest.find('}')?];
        (!name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_')).then_some(name)
    })
}

pub enum ExplainMode<'a> {
    Template,
    Llm {
        client: &'a dyn CompletionClient,
        options: LlmOptions,
        max_sentences: usize,
    },
}

fn humanize(items: &[String], fallback: &str) -> String {
    if items.is_empty() {
        return fallback.to_string();
    }
    items.iter().map(|s| s.replace('_', " ")).collect::<Vec<_>>().join(", ")
}

fn template_explanation(
    c: &Contribution,
    segments: &HashMap<&str, &Segment>,
    annotations: &HashMap<&str, &ClauseAnnotation>,
    templates: &ExplanationTemplates,
) -> Explanation {
    let mut data_types = Vec::new();
    let mut recipients = Vec::new();
    let mut labels = Vec::new();
    for id in &c.segment_ids {
        let Some(a) = annotations.get(id.as_str()) else {
            continue;
        };
        for l in c.feature.triggers(a) {
            let name = l.name().to_string();
            let bucket = match l.dimension() {
                Dimension::DataType => Some(&mut data_types),
                Dimension::SharingRecipient => Some(&mut recipients),
                _ => None,
            };
            if let Some(b) = bucket {
                if !b.contains(&name) {
                    b.push(name.clone());
                }
            }
            if !labels.contains(&name) {
                labels.push(name);
            }
        }
    }
    let excerpt = c
        .segment_ids
        .first()
        .and_then(|id| segments.get(id.as_str()))
        .map(|s| take_chars(&s.text, MAX_EXCERPT_CHARS).to_string())
        .unwrap_or_default();
    let text = templates
        .get(c.feature)
        .replace("{data_types}", &humanize(&data_types, "personal data"))
        .replace("{recipients}", &humanize(&recipients, "third parties"))
        .replace("{labels}", &humanize(&labels, "several practices"))
        .replace("{excerpt}", &excerpt);
    Explanation {
        feature_name: c.feature,
        text,
        grounded_segments: c.segment_ids.clone(),
        quoted_excerpt: excerpt,
        source: ExplanationSource::Template,
    }
}

/// Spans between pairs of straight or curly double quotes. `None` when the
/// quotes do not pair up.
fn quoted_spans(text: &str) -> Option<Vec<&str>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, char)> = None;
    for (i, c) in text.char_indices() {
        match (open, c) {
            (None, '"') => open = Some((i + 1, '"')),
            (None, '\u{201C}') => open = Some((i + c.len_utf8(), '\u{201D}')),
            (Some((start, close)), c) if c == close => {
                spans.push(&text[start..i]);
                open = None;
            }
            _ => {}
        }
    }
    open.is_none().then_some(spans)
}

/// Sentences outside quoted spans, counted by terminal punctuation followed
/// by whitespace or end of text.
pub fn count_sentences(text: &str) -> usize {
    let mut outside = String::new();
    let mut quote: Option<char> = None;
    for c in text.chars() {
        match (quote, c) {
            (None, '"') => quote = Some('"'),
            (None, '\u{201C}') => quote = Some('\u{201D}'),
            (Some(close), c) if c == close => {
                quote = None;
                outside.push('Q');
            }
            (Some(_), _) => {}
            (None, c) => outside.push(c),
        }
    }
    let chars: Vec<char> = outside.chars().collect();
    let mut count = 0;
    let mut pending = false;
    for (i, c) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1);
            if pending && next.is_none_or(|n| n.is_whitespace()) {
                count += 1;
                pending = false;
            }
        } else if !c.is_whitespace() {
            pending = true;
        }
    }
    count + usize::from(pending)
}

#[derive(Deserialize)]
struct Rephrasing {
    text: String,
    quoted_excerpt: String,
}

fn rephrase(
    base: &Explanation,
    grounded: &[&Segment],
    client: &dyn CompletionClient,
    options: &LlmOptions,
    max_sentences: usize,
) -> Result<Explanation, String> {
    let clause = grounded.first().map_or("", |s| s.text.as_str());
    let prompt = REPHRASE_PROMPT
        .replace("{{explanation}}", &base.text)
        .replace("{{clause}}", clause)
        .replace("{{max_sentences}}", &max_sentences.to_string());
    let response = client
        .complete(&CompletionRequest {
            prompt,
            model: options.model.clone(),
            max_tokens: options.max_tokens,
        })
        .map_err(|e| e.to_string())?;
    let object = extract_json_object(&response.text).ok_or("no JSON object")?;
    let r: Rephrasing = serde_json::from_str(object).map_err(|e| e.to_string())?;
    let in_grounded = |s: &str| grounded.iter().any(|g| g.text.contains(s));
    if r.quoted_excerpt.trim().is_empty() || char_len(&r.quoted_excerpt) > MAX_EXCERPT_CHARS {
        return Err("excerpt empty or too long".into());
    }
    if !in_grounded(&r.quoted_excerpt) {
        return Err("excerpt is not verbatim".into());
    }
    let spans = quoted_spans(&r.text).ok_or("unbalanced quotes")?;
    if let Some(s) = spans.iter().find(|s| !in_grounded(s)) {
        return Err(format!("quoted text {s:?} is not verbatim"));
    }
    let n = count_sentences(&r.text);
    if !(1..=max_sentences).contains(&n) {
        return Err(format!("{n} sentences"));
    }
    Ok(Explanation {
        feature_name: base.feature_name,
        text: r.text.trim().to_string(),
        grounded_segments: base.grounded_segments.clone(),
        quoted_excerpt: r.quoted_excerpt,
        source: ExplanationSource::Llm,
    })
}

/// One explanation per contribution, in report order.
pub fn generate_explanations(
    report: &RiskReport,
    segments: &[Segment],
    annotations: &[ClauseAnnotation],
    templates: &ExplanationTemplates,
    mode: &ExplainMode<'_>,
) -> Vec<Explanation> {
    let by_id: HashMap<&str, &Segment> = segments.iter().map(|s| (s.id.as_str(), s)).collect();
    let ann_by_id: HashMap<&str, &ClauseAnnotation> = annotations.iter().map(|a| (a.segment_id.as_str(), a)).collect();
    report
        .contributions
        .iter()
        .map(|c| {
            let base = template_explanation(c, &by_id, &ann_by_id, templates);
            match mode {
                ExplainMode::Template => base,
                ExplainMode::Llm {
                    client,
                    options,
                    max_sentences,
                } => {
                    let grounded: Vec<&Segment> = c
                        .segment_ids
                        .iter()
                        .filter_map(|id| by_id.get(id.as_str()).copied())
                        .collect();
                    rephrase(&base, &grounded, *client, options, *max_sentences).unwrap_or_else(|reason| {
                        tracing::debug!(feature = %c.feature, %reason, "rephrasing rejected, using template");
                        base
                    })
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingIssue {
    NoGroundedSegments,
    UnknownSegment { segment_id: String },
    ExcerptTooLong { chars: usize },
    ExcerptNotVerbatim,
}

impl fmt::Display for GroundingIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundingIssue::NoGroundedSegments => f.write_str("no grounded segments"),
            GroundingIssue::UnknownSegment { segment_id } => write!(f, "unknown segment {segment_id}"),
            GroundingIssue::ExcerptTooLong { chars } => {
                write!(f, "excerpt has {chars} chars, limit {MAX_EXCERPT_CHARS}")
            }
            GroundingIssue::ExcerptNotVerbatim => f.write_str("excerpt is not a substring of a grounded segment"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundingViolation {
    pub index: usize,
    pub issue: GroundingIssue,
}

/// Empty iff every explanation is grounded in known segments and quotes one
/// of them verbatim.
pub fn check_grounding(explanations: &[Explanation], segments: &[Segment]) -> Vec<GroundingViolation> {
    let by_id: HashMap<&str, &Segment> = segments.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out = Vec::new();
    for (index, e) in explanations.iter().enumerate() {
        let mut push = |issue| out.push(GroundingViolation { index, issue });
        if e.grounded_segments.is_empty() {
            push(GroundingIssue::NoGroundedSegments);
        }
        for id in &e.grounded_segments {
            if !by_id.contains_key(id.as_str()) {
                push(GroundingIssue::UnknownSegment { segment_id: id.clone() });
            }
        }
        let chars = char_len(&e.quoted_excerpt);
        if chars > MAX_EXCERPT_CHARS {
            push(GroundingIssue::ExcerptTooLong { chars });
        }
        let verbatim = e
            .grounded_segments
            .iter()
            .filter_map(|id| by_id.get(id.as_str()))
            .any(|s| s.text.contains(&e.quoted_excerpt));
        if !verbatim {
            push(GroundingIssue::ExcerptNotVerbatim);
        }
    }
    out
}
