//! Agreement statistics and evaluation metrics.

mod agreement;
mod metrics;
mod permutation;

use thiserror::Error;

pub use agreement::{agreement_matrix, bws_agreement, cohen_kappa, write_agreement_csv, AgreementReport};
pub use metrics::{
    average_ranks, f1_scores, pearson, regression_metrics, spearman, ClassificationMetrics,
    MetricsBundle, RegressionMetrics,
};
pub use permutation::{paired_permutation_test, PermutationResult, EXACT_LIMIT};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least 2 items, got {0}")]
    TooFew(usize),
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("label {0} not in the class list")]
    UnknownLabel(String),
    #[error("no tuple judged validly by both annotators")]
    EmptyIntersection,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
}
