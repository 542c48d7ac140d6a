//! Discrimination metrics and the repeated patient-level split harness.

mod harness;
mod metrics;

pub use harness::{
    disjoint, run_repeated_evaluation, write_comparison_csv, Aggregate, Aggregates, EvaluationReport, RepeatMetrics,
    ScoredInstance, SplitPlan, Trainer, REPORT_SCHEMA_VERSION, Z_95,
};
pub use metrics::{auc_roc, top_decile_metrics, TopDecile};
