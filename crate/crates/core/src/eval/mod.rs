//! Effort metrics, lead time, classification scores and significance tests.

mod classification;
mod effort;
mod log;
mod report;
mod stats;

pub use classification::{classification_metrics, ClassificationMetrics};
pub use effort::{
    effort_stats, lead_time, motion_runs, segment_actions, trim_forces, trim_norms, trimmed_stats, ActionRecord,
    EffortStats, LeadTimes, LEAD_SEARCH_S, MERGE_GAP_S, TRIM_THRESHOLD_N, WINDOW_EXTENSION_S,
};
pub use log::{Condition, TrialLog, TrialMeta, TrialSample, TRIAL_CSV_HEADER};
pub use report::{
    action_table_csv, build_report, Comparison, ConditionSummary, LeadSummary, MetricsReport, ACTION_CSV_HEADER,
    PREDICTION_OFFSET_TICKS,
};
pub use stats::{ln_gamma, mean, regularized_incomplete_beta, std_dev, student_t_two_sided_p, variance, welch_t_test, WelchResult};
