use std::path::Path;

use dpu_core::data::{DatasetSource, SyntheticTask};
use dpu_core::features::{FeatureMatrix, FeatureSpec};
use dpu_core::nn::{MlpOptions, NetworkSpec, TaskKind};
use dpu_core::pipeline::stages::check_disjoint;
use dpu_core::pipeline::{
    ablation_variants, run_config1, run_config2, run_ensemble_baseline, run_layer_ablation, run_sensitivity,
    Configuration, ExperimentConfig, Report,
};
use dpu_core::uncertainty::{pu_std, read_pu_csv, PredictionKind, PredictionSet, PredictionSource};
use dpu_core::Error;

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            task: SyntheticTask::Blobs {
                classes: 3,
                dims: 3,
                spread: 1.0,
            },
            n: 300,
        },
        dropout_rates: vec![0.2],
        n_inferences: 8,
        sensitivity_inferences: vec![4, 8],
        retrains: 2,
        ensemble_size: 3,
        seeds: 2,
        output_dir: out.to_path_buf(),
        ..Default::default()
    };
    cfg.target.hidden = vec![10, 6];
    cfg.target.train.epochs = 3;
    cfg.estimator.hidden = vec![8];
    cfg.estimator.train.epochs = 3;
    cfg
}

#[test]
fn config2_deployed_model_never_samples_dropout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.configuration = Configuration::Config2;
    let report = run_config2(&cfg).unwrap();
    assert_eq!(report.payload.runs.len(), 2);
    for run in &report.payload.runs {
        assert!(!run.mode_audit.sampled_dropout("deployed"));
        assert!(run.mode_audit.sampled_dropout("side"));
        assert!(run.metrics.get("side_quality").is_some());
        assert_ne!(run.metrics.metadata["side_seed"], run.metrics.metadata["target_seed"]);
    }
    let ckpt = dir.path().join("rate_0.2/seed_0/checkpoints");
    assert!(ckpt.join("target.dpum").exists() && ckpt.join("side.dpum").exists());
}

#[test]
fn config1_writes_the_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let report = run_config1(&cfg).unwrap();
    for run in &report.payload.runs {
        assert!(run.mode_audit.sampled_dropout("deployed"));
        assert_eq!(run.metrics.metadata["pu_formula"], "kl");
    }
    let run_dir = dir.path().join("rate_0.2/seed_1");
    for f in [
        "split.json",
        "pu_labels.csv",
        "features.csv",
        "features.manifest.txt",
        "normalization.json",
        "confusion.csv",
    ] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    assert!(dir.path().join("histograms/pu_rate_0.2.csv").exists());

    let labels = read_pu_csv(std::fs::File::open(run_dir.join("pu_labels.csv")).unwrap()).unwrap();
    let features = FeatureMatrix::read_csv(std::fs::File::open(run_dir.join("features.csv")).unwrap()).unwrap();
    assert_eq!(labels.len(), features.rows());
    assert_eq!(features.cols(), 2 * (10 + 6));

    let loaded = Report::load(dir.path().join("report.json")).unwrap();
    assert_eq!(loaded.payload, report.payload);
    assert!(loaded.payload.config.get("output_dir").is_none());
    assert!(report.payload.aggregate.get("estimator_accuracy@0.2/mean").is_some());
}

#[test]
fn grid_entry_points_reject_the_other_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    assert!(matches!(run_config2(&cfg), Err(Error::InvalidConfig(_))));
    let mut one = cfg.clone();
    one.retrains = 1;
    assert!(matches!(run_sensitivity(&one), Err(Error::InvalidConfig(_))));
}

#[test]
fn identical_seed_ensemble_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.seeds = 1;
    cfg.ensemble_identical_seeds = true;
    let report = run_ensemble_baseline(&cfg).unwrap();
    let ens = &report.payload.runs[0];
    assert_eq!(ens.metrics.get("ensemble_pu_mean"), Some(0.0));
    assert_eq!(ens.metrics.get("ensemble_degenerate"), Some(1.0));
    assert_eq!(report.payload.aggregate.metadata["ensemble_degenerate"], "true");

    cfg.ensemble_identical_seeds = false;
    let report = run_ensemble_baseline(&cfg).unwrap();
    assert!(report.payload.runs[0].metrics.get("ensemble_pu_mean").unwrap() > 0.0);
    assert!(report.payload.runs[1].metrics.get("dropout_pu_mean").unwrap() > 0.0);
    assert!(dir.path().join("ensemble.csv").exists());
}

#[test]
fn pu_formula_ignores_the_prediction_source() {
    let values = vec![vec![vec![0.1], vec![0.4], vec![0.3]], vec![vec![2.0], vec![2.0], vec![2.5]]];
    let mc = PredictionSet::new(
        PredictionKind::Scalar,
        &values,
        PredictionSource::McDropout { rate: 0.3, base_seed: 1 },
    )
    .unwrap();
    let ens = PredictionSet::new(PredictionKind::Scalar, &values, PredictionSource::Ensemble { model_count: 3 })
        .unwrap();
    assert_eq!(pu_std(&mc).unwrap(), pu_std(&ens).unwrap());
}

#[test]
fn sensitivity_reports_every_rate_pair_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.dropout_rates = vec![0.1, 0.3];
    let report = run_sensitivity(&cfg).unwrap();
    let agg = &report.payload.aggregate;
    for key in ["0.1x0.1", "0.1x0.3", "0.3x0.1", "0.3x0.3"] {
        for n in [4, 8] {
            let v = agg.get(&format!("pearson_sq@{key}/n={n}")).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert_eq!(report.payload.runs.len(), 4);
    assert!(dir.path().join("sensitivity.csv").exists());
}

#[test]
fn ablation_variants_count_from_the_input_side() {
    let spec = NetworkSpec::mlp(
        5,
        &[12, 8, 4],
        TaskKind::Regression,
        &MlpOptions {
            dropout: Some(0.1),
            ..Default::default()
        },
    );
    let base = FeatureSpec::all_layers(&spec);
    let fcls = spec.hidden_fcl_indices();
    let variants = ablation_variants(&spec, &base);
    let names: Vec<&str> = variants.iter().map(|(n, _)| *n).collect();
    assert_eq!(names, ["all_fcl", "bottom_two_fcl", "bottom_fcl"]);
    assert_eq!(variants[0].1.layer_indices, fcls);
    assert_eq!(variants[1].1.layer_indices, fcls[..2]);
    assert_eq!(variants[2].1.layer_indices, fcls[..1]);
    assert_eq!(variants[2].1.width(&spec), 24);
}

#[test]
fn layer_ablation_reports_each_variant() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.seeds = 1;
    let report = run_layer_ablation(&cfg).unwrap();
    let m = &report.payload.runs[0].metrics;
    assert_eq!(m.get("all_fcl/feature_width"), Some(32.0));
    assert_eq!(m.get("bottom_fcl/feature_width"), Some(20.0));
    assert_eq!(m.get("bottom_fcl/weight_count"), Some(20.0 * 8.0 + 8.0));
    assert!(m.get("bottom_two_fcl/estimator_accuracy").is_some());
}

#[test]
fn estimator_evaluation_rejects_overlapping_ids() {
    assert!(check_disjoint(&[1, 2, 3], &[4, 5]).is_ok());
    assert!(matches!(check_disjoint(&[1, 2, 3], &[3, 4]), Err(Error::Split(_))));
}
