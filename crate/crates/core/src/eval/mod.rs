//! Forecast metrics, multi-run aggregation, win counting and reports.

mod aggregate;
mod evaluate;
mod metrics;
mod report;

pub use aggregate::{aggregate_all, aggregate_runs, count_wins, mean_and_std, ComparisonTable, HorizonMetrics};
pub use evaluate::{
    evaluate_forecasts, evaluate_model, evaluate_model_in, evaluate_persistence, persistence_forecast, ErrorMetrics,
    MetricScale, RunResult,
};
pub use metrics::{mae, rmse};
pub use report::{
    format_significant, mae_reductions, render_plot_csv, render_report_csv, render_report_text,
    write_reports, Metric,
};
