//! IR effectiveness metrics, TREC run files and evaluation reports.

mod metrics;
mod report;
mod run;

pub use metrics::{average_precision, dcg_at_k, ndcg_at_k, recall_at_k, Metric};
pub use report::{evaluate_run, EvalReport};
pub use run::RunRanking;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("document `{0}` appears more than once in a ranking")]
    DuplicateDoc(String),
    #[error("run contains no queries")]
    EmptyRun,
    #[error("cutoff k must be at least 1")]
    ZeroCutoff,
    #[error("unknown metric `{0}` (expected map, ndcg@K, recall@K or capped_recall@K)")]
    UnknownMetric(String),
}
