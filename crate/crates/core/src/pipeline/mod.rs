//! End-to-end experiments: Configuration 1 and 2, sensitivity, layer
//! ablation and the ensemble baseline, with their artifacts and reports.

pub mod config;
pub mod experiments;
pub mod report;
pub mod stages;

pub use config::{Configuration, ExperimentConfig, FeatureSettings, TrainSettings};
pub use experiments::{
    ablation_variants, evaluate, run, run_config1, run_config2, run_ensemble_baseline, run_layer_ablation,
    run_sensitivity,
};
pub use report::{AuditEntry, ModeAudit, Payload, Report, RunRecord, Runtime};
pub use stages::{
    run_single, stage_extract_features, stage_gen_pu, stage_train_estimator, stage_train_target,
};
