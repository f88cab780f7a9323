//! Metrics, paired significance testing, and the nested cross-validation
//! harness.

mod metrics;
mod nested;
mod significance;

pub use metrics::{auc, dpd, eod, mae, pearson, GroupExclusion};
pub use nested::{
    divergence_proxy, fit_model, nested_cv, select_alpha_by_inner_cv, vc_heuristic, AlphaPolicy,
    AlphaSelection, ExcludedFold, ExperimentSpec, FittedModel, FoldOutcome, MetricReport,
    ModelSpec, ALPHA_SEARCH_GRID,
};
pub use significance::{paired_significance, PairedTestResult};
