//! Corpus evaluation and component ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::corpus::{AnnotatedCorpus, CorpusEntry};
use super::metrics::{evaluate_clauses, evaluate_policy_risk, ClauseEval, RiskAgreement};
use super::table::{fmt_score, render};
use super::EvalError;
use crate::annotator::{
    annotate_policy, AnnotatorBackend, AnnotatorError, CompletionClient, LexiconBackend, LlmBackend,
};
use crate::risk::{build_risk_report, RiskLevel, RiskWeights};
use crate::schema::{CategoryVocabulary, ClauseAnnotation};
use crate::segmenter::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoSchemaConstraint,
    NoRiskScoring,
    NoSegmentation,
    SummarizationOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoSchemaConstraint,
        Variant::NoRiskScoring,
        Variant::NoSegmentation,
        Variant::SummarizationOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSchemaConstraint => "no_schema_constraint",
            Variant::NoRiskScoring => "no_risk_scoring",
            Variant::NoSegmentation => "no_segmentation",
            Variant::SummarizationOnly => "summarization_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// One run evaluates exactly one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub variant: Variant,
}

/// Annotation without validation, retries or degradation.
pub trait UnconstrainedAnnotator: Send + Sync {
    fn annotate_unconstrained(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<ClauseAnnotation, AnnotatorError>;
}

impl UnconstrainedAnnotator for LexiconBackend {
    fn annotate_unconstrained(
        &self,
        segment: &Segment,
        _vocab: &CategoryVocabulary,
    ) -> Result<ClauseAnnotation, AnnotatorError> {
        Ok(self.annotate(segment))
    }
}

impl<C: CompletionClient> UnconstrainedAnnotator for LlmBackend<C> {
    fn annotate_unconstrained(
        &self,
        segment: &Segment,
        vocab: &CategoryVocabulary,
    ) -> Result<ClauseAnnotation, AnnotatorError> {
        self.annotate_segment_unconstrained(segment, vocab)
    }
}

pub struct EvalContext<'a> {
    pub vocab: &'a CategoryVocabulary,
    pub weights: &'a RiskWeights,
    pub backend: &'a dyn AnnotatorBackend,
    /// Needed by `no_schema_constraint`.
    pub unconstrained: Option<&'a dyn UnconstrainedAnnotator>,
    /// Needed by `summarization_only`.
    pub summarizer: Option<&'a dyn AnnotatorBackend>,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEval {
    pub policy_id: String,
    pub clause: ClauseEval,
    pub predicted_level: Option<RiskLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusEval {
    pub corpus: String,
    pub backend: String,
    pub variant: Variant,
    pub policies: Vec<PolicyEval>,
    /// Counts pooled over the corpus.
    pub pooled: ClauseEval,
    /// Mean of per-policy micro F1; absent for an empty corpus.
    pub mean_f1: Option<f64>,
    pub risk: Option<RiskAgreement>,
}

/// The whole policy as one segment carrying the first segment's id. The
/// other segments come back ambiguous.
fn predict_unsegmented(entry: &CorpusEntry, ctx: &EvalContext<'_>) -> Result<Vec<ClauseAnnotation>, EvalError> {
    let Some(first) = entry.segments.first() else {
        return Ok(Vec::new());
    };
    let whole = Segment {
        id: first.id.clone(),
        text: entry
            .segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n"),
        section_path: Vec::new(),
        start: first.start,
        end: entry.segments.last().map_or(first.end, |s| s.end),
    };
    let mut out = annotate_policy(std::slice::from_ref(&whole), ctx.backend, ctx.vocab, 1)?.annotations;
    out.extend(
        entry.segments[1..]
            .iter()
            .map(|s| ClauseAnnotation::ambiguous(&s.id, ctx.backend.name())),
    );
    Ok(out)
}

fn predict(entry: &CorpusEntry, variant: Variant, ctx: &EvalContext<'_>) -> Result<Vec<ClauseAnnotation>, EvalError> {
    match variant {
        Variant::Full | Variant::NoRiskScoring => {
            Ok(annotate_policy(&entry.segments, ctx.backend, ctx.vocab, ctx.parallelism)?.annotations)
        }
        Variant::NoSchemaConstraint => {
            let raw = ctx
                .unconstrained
                .ok_or_else(|| EvalError::Unavailable("no unconstrained annotator configured".into()))?;
            Ok(entry
                .segments
                .iter()
                .map(|s| raw.annotate_unconstrained(s, ctx.vocab))
                .collect::<Result<_, _>>()?)
        }
        Variant::NoSegmentation => predict_unsegmented(entry, ctx),
        Variant::SummarizationOnly => {
            let summarizer = ctx
                .summarizer
                .ok_or_else(|| EvalError::Unavailable("summarization needs a completion client".into()))?;
            Ok(annotate_policy(&entry.segments, summarizer, ctx.vocab, ctx.parallelism)?.annotations)
        }
    }
}

/// Evaluate one variant over a corpus.
pub fn run_ablation(
    corpus: &AnnotatedCorpus,
    spec: AblationSpec,
    ctx: &EvalContext<'_>,
) -> Result<CorpusEval, EvalError> {
    let with_risk = spec.variant != Variant::NoRiskScoring;
    let mut policies = Vec::with_capacity(corpus.len());
    let mut predicted_levels = BTreeMap::new();
    for entry in &corpus.entries {
        let pred = predict(entry, spec.variant, ctx)?;
        let clause = evaluate_clauses(&pred, entry)?;
        let predicted_level = if with_risk {
            let level = build_risk_report(&pred, ctx.weights)?.level;
            predicted_levels.insert(entry.policy_id.clone(), level);
            Some(level)
        } else {
            None
        };
        policies.push(PolicyEval {
            policy_id: entry.policy_id.clone(),
            clause,
            predicted_level,
        });
    }
    let pooled = ClauseEval::merge(policies.iter().map(|p| &p.clause));
    let mean_f1 =
        (!policies.is_empty()).then(|| policies.iter().map(|p| p.clause.micro.f1).sum::<f64>() / policies.len() as f64);
    let risk = if with_risk && !corpus.is_empty() {
        Some(evaluate_policy_risk(&predicted_levels, &corpus.gold_levels())?)
    } else {
        None
    };
    let backend = match spec.variant {
        Variant::SummarizationOnly => ctx.summarizer.map_or("", |s| s.name()),
        _ => ctx.backend.name(),
    };
    Ok(CorpusEval {
        corpus: corpus.name.clone(),
        backend: backend.to_string(),
        variant: spec.variant,
        policies,
        pooled,
        mean_f1,
        risk,
    })
}

/// The unablated pipeline.
pub fn evaluate_corpus(corpus: &AnnotatedCorpus, ctx: &EvalContext<'_>) -> Result<CorpusEval, EvalError> {
    run_ablation(corpus, AblationSpec { variant: Variant::Full }, ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub f1: Option<f64>,
    /// F1 minus the full variant's F1.
    pub delta: Option<f64>,
    pub risk_agreement: Option<f64>,
    /// Why the variant could not run, if it could not.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub corpus: String,
    pub rows: Vec<AblationRow>,
}

/// Run each variant in turn. Variants whose prerequisites are missing are
/// reported as unavailable rather than failing the whole table.
pub fn run_ablations(
    corpus: &AnnotatedCorpus,
    variants: &[Variant],
    ctx: &EvalContext<'_>,
) -> Result<AblationTable, EvalError> {
    let mut results = Vec::new();
    for &variant in variants {
        match run_ablation(corpus, AblationSpec { variant }, ctx) {
            Ok(e) => results.push((variant, Some(e), None)),
            Err(EvalError::Unavailable(why)) => results.push((variant, None, Some(why))),
            Err(e) => return Err(e),
        }
    }
    let full_f1 = results
        .iter()
        .find(|(v, _, _)| *v == Variant::Full)
        .and_then(|(_, e, _)| e.as_ref()?.mean_f1);
    let rows = results
        .into_iter()
        .map(|(variant, eval, note)| {
            let f1 = eval.as_ref().and_then(|e| e.mean_f1);
            AblationRow {
                variant,
                f1,
                delta: match (variant, f1, full_f1) {
                    (Variant::Full, _, _) => None,
                    (_, Some(x), Some(base)) => Some(x - base),
                    _ => None,
                },
                risk_agreement: eval.as_ref().and_then(|e| e.risk.as_ref()).map(|r| r.agreement),
                note,
            }
        })
        .collect();
    Ok(AblationTable {
        corpus: corpus.name.clone(),
        rows,
    })
}

impl AblationTable {
    pub fn render(&self) -> String {
        let header = ["Variant", "F1", "Delta", "Risk agreement"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.variant.to_string(),
                    fmt_score(r.f1),
                    match (r.variant, r.delta) {
                        (Variant::Full, _) => "--".into(),
                        (_, Some(d)) => format!("{d:+.2}"),
                        (_, None) => "n/a".into(),
                    },
                    fmt_score(r.risk_agreement),
                ]
            })
            .collect();
        let mut out = render(&header, &rows);
        for r in &self.rows {
            if let Some(n) = &r.note {
                out.push_str(&format!("{}: {n}\n", r.variant));
            }
        }
        out
    }
}
