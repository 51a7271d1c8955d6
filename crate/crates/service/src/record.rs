use std::collections::HashSet;

use chrono::{DateTime, Utc};
use clausewise_core::explainer::Explanation;
use clausewise_core::risk::Feature;
use clausewise_core::{ClauseAnnotation, FeatureVector, PolicyDocument, RiskLevel, RiskReport, Segment};
use serde::{Deserialize, Serialize};

/// Everything produced by one analysis run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRecord {
    pub analysis_id: String,
    pub domain: String,
    /// Backend identity that went into `analysis_id`.
    pub backend: String,
    pub document: PolicyDocument,
    pub segments: Vec<Segment>,
    pub annotations: Vec<ClauseAnnotation>,
    pub features: FeatureVector,
    pub risk: RiskReport,
    pub explanations: Vec<Explanation>,
    pub created_at: DateTime<Utc>,
}

impl AnalysisRecord {
    /// Every segment id mentioned anywhere in the record must name one of
    /// its segments. Returns the first dangling reference.
    pub fn dangling_reference(&self) -> Option<String> {
        let ids: HashSet<&str> = self.segments.iter().map(|s| s.id.as_str()).collect();
        let annotated = self.annotations.iter().map(|a| a.segment_id.as_str());
        let provenance = self.features.provenance.values().flatten().map(String::as_str);
        let contributions = self
            .risk
            .contributions
            .iter()
            .flat_map(|c| c.segment_ids.iter().map(String::as_str));
        let explained = self
            .explanations
            .iter()
            .flat_map(|e| e.grounded_segments.iter().map(String::as_str));
        annotated
            .chain(provenance)
            .chain(contributions)
            .chain(explained)
            .find(|id| !ids.contains(id))
            .map(String::from)
    }

    pub fn summary(&self) -> DomainReport {
        DomainReport::from_record(self)
    }
}

/// How many harmful contributions a domain report lists.
pub const REPORT_TOP_N: usize = 5;

/// What the browser companion needs to decide on and render a warning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain: String,
    pub analysis_id: String,
    pub score: u8,
    pub level: RiskLevel,
    pub created_at: DateTime<Utc>,
    /// Harmful contributions, largest weight first.
    pub top_contributions: Vec<ReportItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportItem {
    pub feature: Feature,
    pub weight: i64,
    pub explanation: String,
    pub excerpt: String,
    pub segment_id: Option<String>,
}

impl DomainReport {
    pub fn from_record(record: &AnalysisRecord) -> Self {
        let mut harmful: Vec<_> = record.risk.contributions.iter().filter(|c| c.weight > 0).collect();
        // Stable: equal weights keep feature order.
        harmful.sort_by(|a, b| b.weight.cmp(&a.weight));
        let top_contributions = harmful
            .into_iter()
            .take(REPORT_TOP_N)
            .map(|c| {
                let explanation = record.explanations.iter().find(|e| e.feature_name == c.feature);
                ReportItem {
                    feature: c.feature,
                    weight: c.weight,
                    explanation: explanation.map(|e| e.text.clone()).unwrap_or_default(),
                    excerpt: explanation.map(|e| e.quoted_excerpt.clone()).unwrap_or_default(),
                    segment_id: explanation
                        .and_then(|e| e.grounded_segments.first().cloned())
                        .or_else(|| c.segment_ids.first().cloned()),
                }
            })
            .collect();
        DomainReport {
            domain: record.domain.clone(),
            analysis_id: record.analysis_id.clone(),
            score: record.risk.score,
            level: record.risk.level,
            created_at: record.created_at,
            top_contributions,
        }
    }
}
