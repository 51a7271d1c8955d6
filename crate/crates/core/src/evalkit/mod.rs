//! Evaluation: corpus loading, clause metrics, policy risk agreement,
//! ablations and distribution comparison.

mod ablation;
mod corpus;
mod distribution;
mod metrics;
mod table;

use thiserror::Error;

pub use ablation::{
    evaluate_corpus, run_ablation, run_ablations, AblationRow, AblationSpec, AblationTable, CorpusEval, EvalContext,
    PolicyEval, UnconstrainedAnnotator, Variant,
};
pub use corpus::{load_corpus, parse_corpus, write_corpus, AnnotatedCorpus, CorpusEntry, CorpusError, LineError};
pub use distribution::{compare_distributions, DistributionComparison, LevelCounts, LevelDeltas};
pub use metrics::{evaluate_clauses, evaluate_policy_risk, ClauseEval, Counts, DimensionEval, Prf, RiskAgreement};
pub use table::{render as render_table, F1Row, F1Table};

use crate::annotator::AnnotatorError;
use crate::risk::RiskError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    Input(String),
    #[error("variant unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Backend(#[from] AnnotatorError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}
