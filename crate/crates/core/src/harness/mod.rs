//! Experiment orchestration: configuration, the training loop, evaluation,
//! metric files and cross-run comparison.

pub mod compare;
pub mod config;
pub mod metrics;
pub mod run;

pub use compare::{compare_runs, mean_std, ComparisonReport, MeanStd, RunSummary};
pub use config::{ExperimentConfig, Scenario, SimSection, WorkloadSection};
pub use metrics::{export_csv, read_metrics_csv, write_metrics, EpisodeMetrics, METRICS_HEADER};
pub use run::{
    build_agent, run_episode, run_evaluation, run_training, seed_dir, train_seed, ClusterEnv, Mode,
    RunManifest, SeedManifest, SeedResult, TrainingReport,
};
