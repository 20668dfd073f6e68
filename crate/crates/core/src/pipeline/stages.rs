//! The stages of one experiment run and their on-disk artifacts.
//!
//! A run directory holds `split.json`, `checkpoints/`, `pu_labels.csv`,
//! `features.csv`, `normalization.json`, `report.json`, `confusion.csv` and
//! `histograms/*.csv`. Each stage can be run on its own against that layout;
//! [`run_single`] runs them all in memory and writes the same files.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::config::{Configuration, ExperimentConfig};
use super::report::{ModeAudit, RunRecord};
use crate::data::{split, Dataset, SplitPlan};
use crate::error::{Error, Result, StageExt};
use crate::estimator::{assign_bucket, train_estimator, EstimatorMode, EstimatorModel, Estimates};
use crate::features::{
    build_features, capture_activations, fit_normalization, FeatureMatrix, FeatureSpec,
    NormalizationStats, RawActivations,
};
use crate::metrics::{
    accuracy, confusion, histogram, mse, r2_score, summary_stats, write_confusion_csv,
    write_histogram_csv, MetricsReport,
};
use crate::nn::{predict, train, Checkpoint, ForwardMode, LossKind, NetworkSpec, NetworkState, TaskKind, Tensor2D};
use crate::uncertainty::{mc_predict, pu, read_pu_csv, write_pu_csv, PredictionSet, PuFormula, PuVector};
use crate::seed;

pub const TARGET_CHECKPOINT: &str = "checkpoints/target.dpum";
pub const SIDE_CHECKPOINT: &str = "checkpoints/side.dpum";
/// One feature column name per line, alongside `features.csv`.
pub const FEATURE_MANIFEST: &str = "features.manifest.txt";

pub fn estimator_checkpoint(mode: EstimatorMode) -> String {
    match mode {
        EstimatorMode::Regression => "checkpoints/estimator_regression.dpum".into(),
        EstimatorMode::Classification => "checkpoints/estimator_classification.dpum".into(),
    }
}

/// A trained network with the seed it was trained from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub seed: u64,
}

impl Model {
    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.spec.clone(), self.state.clone());
        ck.sections.push((*b"SEED", self.seed.to_le_bytes().to_vec()));
        ck
    }

    fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let seed = ck
            .section(b"SEED")
            .and_then(|b| b.try_into().ok())
            .map(u64::from_le_bytes)
            .ok_or_else(|| Error::Checkpoint("missing SEED section".into()))?;
        Ok(Self {
            spec: ck.spec,
            state: ck.state,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(dir) = path.as_ref().parent() {
            fs::create_dir_all(dir)?;
        }
        self.checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// The dataset with its split; the estimator splits are rows
/// `[0, d_prime_train)` and `[d_prime_train, d_test)` of [`Self::test`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub plan: SplitPlan,
}

impl Prepared {
    pub fn train(&self) -> Dataset {
        self.data.subset(&self.plan.d_train)
    }

    pub fn test(&self) -> Dataset {
        self.data.subset(&self.plan.d_test)
    }

    pub fn estimator_rows(&self) -> (Vec<usize>, Vec<usize>) {
        let half = self.plan.sizes.d_prime_train;
        ((0..half).collect(), (half..self.plan.sizes.d_test).collect())
    }
}

pub fn prepare_data(cfg: &ExperimentConfig, run_seed: u64) -> Result<Prepared> {
    let data = cfg.dataset.load(seed::derive(run_seed, "data")).stage("load data")?;
    let plan = split(data.len(), seed::derive(run_seed, "split"), cfg.split).stage("split")?;
    Ok(Prepared { data, plan })
}

/// Trains one target network on `data`.
pub fn fit_target(cfg: &ExperimentConfig, spec: NetworkSpec, data: &Dataset, seed: u64) -> Result<Model> {
    let mut t = cfg.target.train.to_train_config(LossKind::for_task(spec.task), seed);
    t.batch_size = t.batch_size.min(data.len());
    let (state, _) = train(&spec, &data.inputs, &data.labels, &t)?;
    Ok(Model { spec, state, seed })
}

fn spec_for(cfg: &ExperimentConfig, data: &Dataset, rate: Option<f64>) -> Result<NetworkSpec> {
    cfg.target_spec(data.numeric_width(), &data.vocab_sizes, data.task, rate)
}

/// The deployed target and, for config2, the side model that supplies labels.
#[derive(Debug, Clone)]
pub struct Targets {
    pub deployed: Model,
    pub side: Option<Model>,
}

impl Targets {
    pub fn labeler(&self) -> (&Model, &'static str) {
        match &self.side {
            Some(side) => (side, "side"),
            None => (&self.deployed, "deployed"),
        }
    }
}

pub fn train_targets(cfg: &ExperimentConfig, prep: &Prepared, rate: f64, run_seed: u64) -> Result<Targets> {
    let train_set = prep.train();
    let target_seed = seed::derive(run_seed, "target");
    match cfg.configuration {
        Configuration::Config1 => {
            let spec = spec_for(cfg, &prep.data, Some(rate))?;
            if !spec.has_dropout() {
                return Err(Error::InvalidConfig("config1 target has no dropout layers".into()));
            }
            Ok(Targets {
                deployed: fit_target(cfg, spec, &train_set, target_seed).stage("train target")?,
                side: None,
            })
        }
        Configuration::Config2 => {
            let spec = spec_for(cfg, &prep.data, None)?;
            if spec.has_dropout() {
                return Err(Error::InvalidConfig("config2 deployed target has dropout layers".into()));
            }
            let side_spec = spec_for(cfg, &prep.data, Some(rate))?;
            Ok(Targets {
                deployed: fit_target(cfg, spec, &train_set, target_seed).stage("train target")?,
                side: Some(
                    fit_target(cfg, side_spec, &train_set, seed::derive(run_seed, "side"))
                        .stage("train side model")?,
                ),
            })
        }
    }
}

/// R² for regression, accuracy for classification.
pub fn quality(task: TaskKind, labels: &Tensor2D, outputs: &Tensor2D) -> Result<f64> {
    match task {
        TaskKind::Regression => r2_score(labels.data(), outputs.data()),
        TaskKind::BinaryClassification => {
            let y: Vec<usize> = labels.data().iter().map(|&v| v as usize).collect();
            let p: Vec<usize> = outputs.data().iter().map(|&v| usize::from(v >= 0.5)).collect();
            accuracy(&y, &p)
        }
        TaskKind::Multiclass { .. } => {
            let y: Vec<usize> = labels.data().iter().map(|&v| v as usize).collect();
            accuracy(&y, &outputs.argmax_rows())
        }
    }
}

pub fn quality_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Regression => "r2",
        _ => "accuracy",
    }
}

/// Eval-mode quality of `model` on `data`.
pub fn eval_quality(model: &Model, data: &Dataset, audit: &mut ModeAudit, name: &str) -> Result<f64> {
    audit.record(name, "evaluate target", "eval");
    let out = predict(&model.spec, &model.state, &data.inputs, ForwardMode::Eval)?;
    quality(data.task, &data.labels, &out)
}

/// Mean quality of the individual MC-dropout draws in `set`.
pub fn mc_single_quality(set: &PredictionSet, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..set.n_inferences() {
        total += quality(data.task, &data.labels, &set.inference(i))?;
    }
    Ok(total / set.n_inferences() as f64)
}

pub fn generate_pu(
    cfg: &ExperimentConfig,
    labeler: &Model,
    inputs: &Tensor2D,
    rate: f64,
    run_seed: u64,
    audit: &mut ModeAudit,
    name: &str,
) -> Result<(PredictionSet, PuVector)> {
    audit.record(name, "gen-pu", "mc_dropout");
    let set = mc_predict(
        &labeler.spec,
        &labeler.state,
        inputs,
        cfg.n_inferences,
        rate,
        seed::derive(run_seed, "mc"),
        cfg.execution(),
    )
    .stage("gen-pu")?;
    let scores = pu(&set).stage("gen-pu")?;
    Ok((set, scores))
}

/// Eval-mode activations of every hidden FCL with normalization fitted on
/// `fit_rows` only.
pub fn capture_all(
    model: &Model,
    inputs: &Tensor2D,
    fit_rows: &[usize],
    audit: &mut ModeAudit,
    name: &str,
) -> Result<(RawActivations, NormalizationStats)> {
    audit.record(name, "extract-features", "eval");
    let raw = capture_activations(&model.spec, &model.state, inputs, &model.spec.hidden_fcl_indices())
        .stage("extract-features")?;
    let stats = fit_normalization(&raw.select_rows(fit_rows));
    Ok((raw, stats))
}

pub fn features_for(
    raw: &RawActivations,
    stats: &NormalizationStats,
    fs: &FeatureSpec,
) -> Result<FeatureMatrix> {
    build_features(raw, fs, fs.use_values.then_some(stats)).stage("extract-features")
}

pub fn fit_estimator(
    cfg: &ExperimentConfig,
    mode: EstimatorMode,
    features: &FeatureMatrix,
    labels: &PuVector,
    run_seed: u64,
) -> Result<EstimatorModel> {
    let ec = cfg.estimator.to_config(mode, seed::derive(run_seed, "estimator"));
    train_estimator(features, labels, &ec).stage("train-estimator")
}

/// Fails if any id appears in both sets.
pub fn check_disjoint(train_ids: &[u64], test_ids: &[u64]) -> Result<()> {
    let train: BTreeSet<u64> = train_ids.iter().copied().collect();
    if let Some(id) = test_ids.iter().find(|id| train.contains(id)) {
        return Err(Error::Split(format!(
            "example {id} is in both the estimator training and evaluation sets"
        )));
    }
    Ok(())
}

/// Metrics of an estimator on held-out rows; returns the confusion matrix in
/// classification mode.
pub fn evaluate_estimator(
    model: &EstimatorModel,
    test_features: &FeatureMatrix,
    test_labels: &PuVector,
    train_ids: &[u64],
    test_ids: &[u64],
    report: &mut MetricsReport,
) -> Result<(Estimates, Option<Vec<Vec<u64>>>)> {
    check_disjoint(train_ids, test_ids).stage("evaluate")?;
    let est = model.estimate(test_features).stage("evaluate")?;
    let truth = &test_labels.scores;
    let mut matrix = None;
    match &est {
        Estimates::Regression(values) => {
            report.set("estimator_r2", r2_score(truth, values).stage("evaluate")?);
            report.set("estimator_mse", mse(truth, values).stage("evaluate")?);
            report.set("estimator_params_regression", model.param_count() as f64);
        }
        Estimates::Classification { buckets, .. } => {
            let bounds = model
                .buckets
                .as_ref()
                .ok_or_else(|| Error::Checkpoint("classification estimator without buckets".into()))?;
            let actual: Vec<usize> = truth.iter().map(|&p| assign_bucket(p, bounds)).collect();
            report.set("estimator_accuracy", accuracy(&actual, buckets).stage("evaluate")?);
            report.set("estimator_params_classification", model.param_count() as f64);
            let m = confusion(&actual, buckets, bounds.k).stage("evaluate")?;
            report.with_confusion(m.clone());
            matrix = Some(m);
        }
    }
    Ok((est, matrix))
}

fn write_histogram(dir: &Path, name: &str, values: &[f64], bins: usize) -> Result<()> {
    let hist_dir = dir.join("histograms");
    fs::create_dir_all(&hist_dir)?;
    write_histogram_csv(BufWriter::new(File::create(hist_dir.join(name))?), &histogram(values, bins))
}

/// Runs every stage for one grid point, writing artifacts to `dir` if given.
/// Returns the run's record and its PU labels.
pub fn run_single(
    cfg: &ExperimentConfig,
    rate: f64,
    repeat: usize,
    dir: Option<&Path>,
) -> Result<(RunRecord, PuVector)> {
    let run_seed = cfg.run_seed(repeat);
    let prep = prepare_data(cfg, run_seed)?;
    let targets = train_targets(cfg, &prep, rate, run_seed)?;
    let (metrics, mode_audit, scores) = finish_run(cfg, &prep, &targets, rate, run_seed, dir)?;
    let record = RunRecord {
        dropout_rate: rate,
        repeat,
        seed: run_seed,
        metrics,
        mode_audit,
    };
    Ok((record, scores))
}

/// Everything after target training: labels, features, estimators, report.
pub fn finish_run(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    targets: &Targets,
    rate: f64,
    run_seed: u64,
    dir: Option<&Path>,
) -> Result<(MetricsReport, ModeAudit, PuVector)> {
    let mut audit = ModeAudit::default();
    let mut m = MetricsReport::default();
    let test = prep.test();
    let (train_rows, eval_rows) = prep.estimator_rows();
    let train_ids: Vec<u64> = train_rows.iter().map(|&r| test.ids[r]).collect();
    let eval_ids: Vec<u64> = eval_rows.iter().map(|&r| test.ids[r]).collect();

    m.set("dropout_rate", rate);
    m.set("n_inferences", cfg.n_inferences as f64);
    m.set("target_quality", eval_quality(&targets.deployed, &test, &mut audit, "deployed")?);
    m.meta("configuration", cfg.configuration.as_str());
    m.meta("seed", run_seed);
    m.meta("target_seed", targets.deployed.seed);
    m.meta("quality_metric", quality_name(test.task));
    m.meta("dataset", cfg.dataset.describe());

    let (labeler, labeler_name) = targets.labeler();
    if let Some(side) = &targets.side {
        m.meta("side_seed", side.seed);
        m.set("side_quality", eval_quality(side, &test, &mut audit, "side")?);
    }
    let (set, scores) = generate_pu(cfg, labeler, &test.inputs, rate, run_seed, &mut audit, labeler_name)?;
    m.set("labeler_quality_mc_single", mc_single_quality(&set, &test)?);
    let (pu_mean, pu_sd) = summary_stats(&scores.scores)?;
    m.set("pu_mean", pu_mean);
    m.set("pu_sd", pu_sd);
    m.meta("pu_formula", scores.formula.as_str());

    let (raw, stats) = capture_all(&targets.deployed, &test.inputs, &train_rows, &mut audit, "deployed")?;
    let fs = cfg.features.resolve(&targets.deployed.spec)?;
    let features = features_for(&raw, &stats, &fs)?;
    m.set("feature_width", features.cols() as f64);

    let train_x = features.select_rows(&train_rows);
    let eval_x = features.select_rows(&eval_rows);
    let train_y = scores.select(&train_rows);
    let eval_y = scores.select(&eval_rows);
    let mut estimators = Vec::new();
    let mut matrix = None;
    let mut estimates = None;
    for &mode in &cfg.estimator.modes {
        let mut model = fit_estimator(cfg, mode, &train_x, &train_y, run_seed)?;
        model.feature_spec = Some(fs.clone());
        model.normalization = fs.use_values.then(|| stats.clone());
        let (est, cm) = evaluate_estimator(&model, &eval_x, &eval_y, &train_ids, &eval_ids, &mut m)?;
        if let Some(cm) = cm {
            matrix = Some(cm);
        }
        if let Estimates::Regression(v) = est {
            estimates = Some(v);
        }
        estimators.push(model);
    }
    if cfg.configuration == Configuration::Config2 && audit.sampled_dropout("deployed") {
        return Err(Error::InvalidSpec("deployed model sampled dropout".into()).at("audit"));
    }

    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("split.json"), prep.plan.to_json()?)?;
        targets.deployed.save(dir.join(TARGET_CHECKPOINT))?;
        if let Some(side) = &targets.side {
            side.save(dir.join(SIDE_CHECKPOINT))?;
        }
        write_pu_csv(
            BufWriter::new(File::create(dir.join("pu_labels.csv"))?),
            &test.ids,
            &scores,
            cfg.n_inferences,
            &set.source,
        )?;
        features.write_csv(BufWriter::new(File::create(dir.join("features.csv"))?))?;
        fs::write(dir.join(FEATURE_MANIFEST), features.manifest_text())?;
        fs::write(dir.join("normalization.json"), serde_json::to_string(&stats)?)?;
        for model in &estimators {
            model.to_checkpoint()?.save(dir.join(estimator_checkpoint(model.mode)))?;
        }
        if let Some(cm) = &matrix {
            write_confusion_csv(BufWriter::new(File::create(dir.join("confusion.csv"))?), cm)?;
        }
        write_histogram(dir, "pu.csv", &scores.scores, cfg.histogram_bins)?;
        if let Some(v) = &estimates {
            write_histogram(dir, "pu_estimates.csv", v, cfg.histogram_bins)?;
        }
    }
    Ok((m, audit, scores))
}

// Stage entry points that communicate through a run directory.

/// Trains the target (and side model) and writes checkpoints and the split.
pub fn stage_train_target(cfg: &ExperimentConfig, rate: f64, run_seed: u64, dir: &Path) -> Result<MetricsReport> {
    let prep = prepare_data(cfg, run_seed)?;
    let targets = train_targets(cfg, &prep, rate, run_seed)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("split.json"), prep.plan.to_json()?)?;
    targets.deployed.save(dir.join(TARGET_CHECKPOINT))?;
    if let Some(side) = &targets.side {
        side.save(dir.join(SIDE_CHECKPOINT))?;
    }
    let mut m = MetricsReport::default();
    let mut audit = ModeAudit::default();
    m.set("target_quality", eval_quality(&targets.deployed, &prep.test(), &mut audit, "deployed")?);
    m.meta("quality_metric", quality_name(prep.data.task));
    m.meta("target_seed", targets.deployed.seed);
    Ok(m)
}

fn load_labeler(cfg: &ExperimentConfig, dir: &Path) -> Result<Model> {
    let path = match cfg.configuration {
        Configuration::Config1 => dir.join(TARGET_CHECKPOINT),
        Configuration::Config2 => dir.join(SIDE_CHECKPOINT),
    };
    Model::load(path).stage("load checkpoint")
}

/// Writes `pu_labels.csv` for the target test split.
pub fn stage_gen_pu(cfg: &ExperimentConfig, rate: f64, run_seed: u64, dir: &Path) -> Result<PuVector> {
    let prep = prepare_data(cfg, run_seed)?;
    let labeler = load_labeler(cfg, dir)?;
    let test = prep.test();
    let mut audit = ModeAudit::default();
    let (set, scores) = generate_pu(cfg, &labeler, &test.inputs, rate, run_seed, &mut audit, "labeler")?;
    write_pu_csv(
        BufWriter::new(File::create(dir.join("pu_labels.csv"))?),
        &test.ids,
        &scores,
        cfg.n_inferences,
        &set.source,
    )?;
    write_histogram(dir, "pu.csv", &scores.scores, cfg.histogram_bins)?;
    Ok(scores)
}

/// Writes `features.csv` and `normalization.json` from the deployed target.
pub fn stage_extract_features(cfg: &ExperimentConfig, run_seed: u64, dir: &Path) -> Result<FeatureMatrix> {
    let prep = prepare_data(cfg, run_seed)?;
    let model = Model::load(dir.join(TARGET_CHECKPOINT)).stage("load checkpoint")?;
    let (train_rows, _) = prep.estimator_rows();
    let mut audit = ModeAudit::default();
    let (raw, stats) = capture_all(&model, &prep.test().inputs, &train_rows, &mut audit, "deployed")?;
    let fs = cfg.features.resolve(&model.spec)?;
    let features = features_for(&raw, &stats, &fs)?;
    features.write_csv(BufWriter::new(File::create(dir.join("features.csv"))?))?;
    fs::write(dir.join(FEATURE_MANIFEST), features.manifest_text())?;
    fs::write(dir.join("normalization.json"), serde_json::to_string(&stats)?)?;
    Ok(features)
}

/// Artifacts needed to train or evaluate estimators.
struct EstimatorInputs {
    features: FeatureMatrix,
    labels: PuVector,
    ids: Vec<u64>,
    train_rows: Vec<usize>,
    eval_rows: Vec<usize>,
}

fn read_estimator_inputs(dir: &Path) -> Result<EstimatorInputs> {
    let plan = SplitPlan::from_json(&fs::read_to_string(dir.join("split.json"))?)?;
    let features = FeatureMatrix::read_csv(File::open(dir.join("features.csv"))?).stage("read features")?;
    let records = read_pu_csv(File::open(dir.join("pu_labels.csv"))?).stage("read PU labels")?;
    if records.len() != features.rows() || records.len() != plan.sizes.d_test {
        return Err(Error::shape(
            format!("{} rows in features.csv and pu_labels.csv", plan.sizes.d_test),
            format!("{} and {}", features.rows(), records.len()),
        ));
    }
    let formula = match records.first().map(|r| r.formula.as_str()) {
        Some("kl") => PuFormula::Kl,
        _ => PuFormula::Std,
    };
    let half = plan.sizes.d_prime_train;
    Ok(EstimatorInputs {
        labels: PuVector {
            scores: records.iter().map(|r| r.pu).collect(),
            formula,
        },
        ids: records.iter().map(|r| r.example_id).collect(),
        features,
        train_rows: (0..half).collect(),
        eval_rows: (half..plan.sizes.d_test).collect(),
    })
}

/// Trains one estimator per configured mode on the estimator training rows.
pub fn stage_train_estimator(cfg: &ExperimentConfig, run_seed: u64, dir: &Path) -> Result<Vec<EstimatorModel>> {
    let inputs = read_estimator_inputs(dir)?;
    let stats: Option<NormalizationStats> = fs::read_to_string(dir.join("normalization.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let x = inputs.features.select_rows(&inputs.train_rows);
    let y = inputs.labels.select(&inputs.train_rows);
    let mut out = Vec::new();
    for &mode in &cfg.estimator.modes {
        let mut model = fit_estimator(cfg, mode, &x, &y, run_seed)?;
        model.normalization = stats.clone();
        model.to_checkpoint()?.save(dir.join(estimator_checkpoint(mode)))?;
        out.push(model);
    }
    Ok(out)
}

/// Evaluates the saved target and estimators on held-out data and writes
/// `confusion.csv` and histograms.
pub fn stage_evaluate(cfg: &ExperimentConfig, rate: f64, run_seed: u64, dir: &Path) -> Result<MetricsReport> {
    let prep = prepare_data(cfg, run_seed)?;
    let target = Model::load(dir.join(TARGET_CHECKPOINT)).stage("load checkpoint")?;
    let mut audit = ModeAudit::default();
    let mut m = MetricsReport::default();
    m.set("dropout_rate", rate);
    m.set("n_inferences", cfg.n_inferences as f64);
    m.set("target_quality", eval_quality(&target, &prep.test(), &mut audit, "deployed")?);
    m.meta("configuration", cfg.configuration.as_str());
    m.meta("seed", run_seed);
    m.meta("target_seed", target.seed);
    m.meta("quality_metric", quality_name(prep.data.task));

    let inputs = read_estimator_inputs(dir)?;
    let train_ids: Vec<u64> = inputs.train_rows.iter().map(|&r| inputs.ids[r]).collect();
    let eval_ids: Vec<u64> = inputs.eval_rows.iter().map(|&r| inputs.ids[r]).collect();
    let x = inputs.features.select_rows(&inputs.eval_rows);
    let y = inputs.labels.select(&inputs.eval_rows);
    for &mode in &cfg.estimator.modes {
        let ck = Checkpoint::load(dir.join(estimator_checkpoint(mode))).stage("load estimator")?;
        let model = EstimatorModel::from_checkpoint(&ck)?;
        let (est, cm) = evaluate_estimator(&model, &x, &y, &train_ids, &eval_ids, &mut m)?;
        if let Some(cm) = cm {
            write_confusion_csv(BufWriter::new(File::create(dir.join("confusion.csv"))?), &cm)?;
        }
        if let Estimates::Regression(v) = est {
            write_histogram(dir, "pu_estimates.csv", &v, cfg.histogram_bins)?;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hygiene_check_catches_overlap() {
        check_disjoint(&[1, 2, 3], &[4, 5]).unwrap();
        assert!(matches!(check_disjoint(&[1, 2, 3], &[5, 2]), Err(Error::Split(_))));
    }

    #[test]
    fn quality_per_task() {
        let y = Tensor2D::column(&[0.0, 1.0, 1.0, 0.0]).unwrap();
        let p = Tensor2D::column(&[0.2, 0.9, 0.4, 0.1]).unwrap();
        assert_eq!(quality(TaskKind::BinaryClassification, &y, &p).unwrap(), 0.75);
        let probs = Tensor2D::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let c = Tensor2D::column(&[0.0, 0.0]).unwrap();
        assert_eq!(quality(TaskKind::Multiclass { classes: 2 }, &c, &probs).unwrap(), 0.5);
    }
}
