//! Metrics, reports and the three-arm experiment.

mod metrics;
mod plot;
mod report;
mod suite;

pub use metrics::{
    confusion_counts, mean_sd, prf_metrics, time_to_detection, ConfusionCounts, PredictionLog, PredictionRow,
    PrfMetrics, TtdResult, DEFAULT_HORIZON, DEFAULT_THRESHOLD,
};
pub use plot::{metric_distributions_svg, ttd_histogram_svg};
pub use report::{
    aggregate_runs, evaluate_log, format_table, read_runs, read_table, write_runs, write_table, MetricsReport,
    RunMetrics, Summary,
};
pub use suite::{
    parse_prediction_file, prediction_file, read_prediction_logs, run_experiment_suite, summarize, write_outputs,
    Arm, ArmRun, SuiteConfig, SuiteResult, RUNS_FILE, TABLE_FILE,
};

#[cfg(test)]
mod tests;
