//! Metrics, λ sweeps, and size / latency reports.

mod metrics;
mod perf;
mod sweep;
mod table;

pub use metrics::{accuracy, argmax_rows, confusion, evaluate, macro_f1, predict, ClassMetrics, ConfusionMatrix, EvalReport};
pub use perf::{
    latency_benchmark, median, percentile, size_report, LatencyReport, SizeEntry, SizeRatio, SizeReport, Timing,
    REFERENCE_STUDENT_PARAMS, REFERENCE_TEACHER_PARAMS,
};
pub use sweep::{default_lambda_grid, lambda_sweep, mean_sd, SweepReport};
pub use table::{ResultTable, TableRow};
