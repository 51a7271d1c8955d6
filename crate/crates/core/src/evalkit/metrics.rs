//! Clause-level precision/recall/F1 and policy-level risk agreement.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::corpus::CorpusEntry;
use super::EvalError;
use crate::risk::RiskLevel;
use crate::schema::{ClauseAnnotation, Dimension};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn prf(self) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-averaged scores over (segment, dimension, label) triples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClauseEval {
    pub counts: Counts,
    pub micro: Prf,
    pub per_dimension: BTreeMap<Dimension, DimensionEval>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DimensionEval {
    pub counts: Counts,
    pub f1: f64,
}

impl ClauseEval {
    pub fn from_counts(counts: Counts, per_dimension: BTreeMap<Dimension, Counts>) -> Self {
        ClauseEval {
            counts,
            micro: counts.prf(),
            per_dimension: per_dimension
                .into_iter()
                .map(|(d, c)| {
                    (
                        d,
                        DimensionEval {
                            counts: c,
                            f1: c.prf().f1,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Pool counts from several evaluations.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a ClauseEval>) -> Self {
        let mut total = Counts::default();
        let mut dims: BTreeMap<Dimension, Counts> = BTreeMap::new();
        for p in parts {
            total.add(p.counts);
            for (d, e) in &p.per_dimension {
                dims.entry(*d).or_default().add(e.counts);
            }
        }
        Self::from_counts(total, dims)
    }
}

type Triple<'a> = (&'a str, Dimension, &'a str);

fn triples(annotations: &[ClauseAnnotation]) -> BTreeSet<Triple<'_>> {
    annotations
        .iter()
        .filter(|a| !a.ambiguous)
        .flat_map(|a| {
            a.labels
                .iter()
                .map(move |l| (a.segment_id.as_str(), l.dimension(), l.name()))
        })
        .collect()
}

/// Compare predicted annotations with the gold annotations of one policy.
/// Ambiguous predictions contribute no triples.
pub fn evaluate_clauses(pred: &[ClauseAnnotation], gold: &CorpusEntry) -> Result<ClauseEval, EvalError> {
    let pred_ids: BTreeSet<&str> = pred.iter().map(|a| a.segment_id.as_str()).collect();
    let gold_ids: BTreeSet<&str> = gold.segments.iter().map(|s| s.id.as_str()).collect();
    if pred_ids != gold_ids || pred.len() != gold_ids.len() {
        let missing: Vec<_> = gold_ids.difference(&pred_ids).collect();
        let extra: Vec<_> = pred_ids.difference(&gold_ids).collect();
        return Err(EvalError::Input(format!(
            "policy {}: predicted segment ids do not match gold (missing {missing:?}, extra {extra:?}, {} predictions for {} segments)",
            gold.policy_id,
            pred.len(),
            gold_ids.len()
        )));
    }
    let p = triples(pred);
    let g = triples(&gold.gold);
    let mut dims: BTreeMap<Dimension, Counts> = Dimension::ALL.into_iter().map(|d| (d, Counts::default())).collect();
    for t in p.union(&g) {
        let c = dims.get_mut(&t.1).expect("every dimension present");
        match (p.contains(t), g.contains(t)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    let mut total = Counts::default();
    for c in dims.values() {
        total.add(*c);
    }
    Ok(ClauseEval::from_counts(total, dims))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAgreement {
    pub agreement: f64,
    pub matches: usize,
    pub total: usize,
    /// `confusion[gold][pred]`, indexed Low, Medium, High.
    pub confusion: [[usize; 3]; 3],
}

fn level_index(l: RiskLevel) -> usize {
    match l {
        RiskLevel::Low => 0,
        RiskLevel::Medium => 1,
        RiskLevel::High => 2,
    }
}

pub fn evaluate_policy_risk(
    pred: &BTreeMap<String, RiskLevel>,
    gold: &BTreeMap<String, RiskLevel>,
) -> Result<RiskAgreement, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Input("no policies to compare".into()));
    }
    if !pred.keys().eq(gold.keys()) {
        return Err(EvalError::Input("predicted and gold policy ids differ".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (id, g) in gold {
        confusion[level_index(*g)][level_index(pred[id])] += 1;
    }
    let matches = (0..3).map(|i| confusion[i][i]).sum();
    Ok(RiskAgreement {
        agreement: matches as f64 / gold.len() as f64,
        matches,
        total: gold.len(),
        confusion,
    })
}
