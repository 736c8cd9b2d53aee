//! AUC and macro-F1, bootstrap intervals, missing-rate sweeps and report files.

mod metrics;
mod report;
mod sweep;

pub use metrics::{
    auc, bootstrap_ci, bootstrap_ci_with, f1_from_predictions, f1_macro, threshold_predictions, Metric,
    DEFAULT_CONFIDENCE, DEFAULT_RESAMPLES, DEFAULT_THRESHOLD,
};
pub use report::{deltas_csv, emit_report, format_table, report_csv, report_json, report_svg, ReportFormat, REPORT_HEADER};
pub use sweep::{attach_deltas, evaluate_scores, mean_rows, positive_scores, sweep_missing_rates, EvalReport, SweepConfig};
