//! Metrics, statistical tests, sweeps, baselines and failure analysis.

pub mod baselines;
pub mod failure;
pub mod metrics;
pub mod runner;
pub mod splits;
pub mod stats;
pub mod sweep;

pub use baselines::{baseline_majority, baseline_tfidf_logreg, exposure_baseline, LogRegParams};
pub use failure::{failure_taxonomy, FailureCase, FailureCategory, FailureInput, FailureKind, FailureReport};
pub use metrics::{compute_dual_metrics, compute_metrics, Confusion, DualMetrics, MetricName, MetricsReport, PositiveMapping};
pub use runner::{evaluate_dataset, render_markdown, write_report, EvalOptions, EvaluationReport, Prediction};
pub use splits::{make_splits, DatasetSplit};
pub use stats::{DEFAULT_PERMUTATIONS, DEFAULT_RESAMPLES, bootstrap_ci, mcnemar, mcnemar_counts, paired_bootstrap, BootstrapCI, McNemarResult, PairedBootstrap};
pub use sweep::{auprc, auroc, linear_grid, threshold_sweep, SweepAxis, SweepReport};
