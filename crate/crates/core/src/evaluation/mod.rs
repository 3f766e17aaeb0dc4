//! Agreement between objective scores and subjective ratings.

pub mod benchmark;
pub mod logistic;
pub mod stats;

pub use benchmark::{
    cache_path, read_manifest, read_report, run_benchmark, summarize, write_report, BenchmarkRun, CorrelationSummary,
    ManifestRow, ScoreCache, ScoredRecord, TypeSummary,
};
pub use logistic::{fit_logistic5, LogisticFit, LogisticParams};
pub use stats::{f_test, fractional_ranks, plcc, rmse, srocc, DEFAULT_SIGNIFICANCE};
