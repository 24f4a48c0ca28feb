//! Training, evaluation, hyperparameter search and the accuracy sweep.

pub mod config;
pub mod metrics;
pub mod search;
pub mod sweep;
pub mod train;

pub use config::{json_hash, ExperimentConfig, TaskBatch};
pub use metrics::{
    empirical_test_error, empirical_train_error, evaluate, predict_domains, to_json_lines,
    DomainScore, Evaluation, MetricsRecord,
};
pub use search::{holdout_split, random_search, LogRange, SearchOutcome, SearchSpace, TrialRecord};
pub use sweep::{cell_config, heatmap_sweep, run_cell, write_grid_csv, CellResult, SweepConfig};
pub use train::{steps_per_epoch, train, train_baseline, train_d2v, TrainOutcome};
