//! Dataset generation, training and evaluation experiments.

mod artifacts;
mod config;
mod dataset;
mod evaluate;
mod experiment;

pub use artifacts::{read_manifest, read_split, write_split, DatasetManifest, SplitManifest};
pub use config::{ExperimentConfig, Mode, OutputTimes};
pub use dataset::{assemble, generate_dataset, input_encoding, split_seed, GeneratedData, Split};
pub use evaluate::{evaluate, evaluate_predictions, predict_recovery_path, CurveComparison, EvaluationReport, PathPrediction};
pub use experiment::{
    audit_targets, generate_datasets, min_r2, path_errors, run_experiment, write_evaluation, write_loss_history,
    ExperimentOutcome, ExperimentReport, PathError, TargetAudit, AUDIT_MAX_SYSTEMS, DISPARATE_MIN_R2,
    IDENTICAL_MIN_R2, MAX_PATH_ERROR,
};
