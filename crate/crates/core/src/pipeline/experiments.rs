//! Grid experiments over dropout rates and repeats. Grid points run through
//! [`crate::exec`], each writing only to its own subdirectory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::config::{Configuration, ExperimentConfig};
use super::report::{aggregate_runs, Clock, ModeAudit, Payload, Report, RunRecord};
use super::stages::{
    capture_all, eval_quality, evaluate_estimator, features_for, fit_estimator, fit_target,
    generate_pu, prepare_data, run_single, stage_evaluate, train_targets, Model,
};
use crate::error::{Error, Result, StageExt};
use crate::estimator::weight_count;
use crate::exec::try_map_indexed;
use crate::features::FeatureSpec;
use crate::metrics::{histogram, pearson_sq, summary_stats, write_histogram_csv, MetricsReport};
use crate::seed;
use crate::uncertainty::{ensemble_predict, mc_predict, pu, PuVector};

fn rate_dir(out: &Path, rate: f64, repeat: usize) -> PathBuf {
    out.join(format!("rate_{rate}")).join(format!("seed_{repeat}"))
}

fn finish(cfg: &ExperimentConfig, experiment: &str, runs: Vec<RunRecord>, aggregate: MetricsReport, clock: &Clock) -> Result<Report> {
    let mut config = serde_json::to_value(cfg)?;
    if let Some(obj) = config.as_object_mut() {
        obj.remove("output_dir");
    }
    let report = Report {
        payload: Payload {
            experiment: experiment.into(),
            config,
            runs,
            aggregate,
        },
        runtime: clock.runtime(&cfg.output_dir),
    };
    report.write(&cfg.output_dir, false)?;
    Ok(report)
}

fn grid(cfg: &ExperimentConfig) -> Vec<(f64, usize)> {
    cfg.dropout_rates
        .iter()
        .flat_map(|&r| (0..cfg.seeds).map(move |j| (r, j)))
        .collect()
}

fn write_pooled_histograms(cfg: &ExperimentConfig, points: &[(f64, usize)], pus: &[PuVector]) -> Result<()> {
    let dir = cfg.output_dir.join("histograms");
    fs::create_dir_all(&dir)?;
    for &rate in &cfg.dropout_rates {
        let pooled: Vec<f64> = points
            .iter()
            .zip(pus)
            .filter(|((r, _), _)| *r == rate)
            .flat_map(|(_, p)| p.scores.iter().copied())
            .collect();
        write_histogram_csv(
            BufWriter::new(File::create(dir.join(format!("pu_rate_{rate}.csv")))?),
            &histogram(&pooled, cfg.histogram_bins),
        )?;
    }
    Ok(())
}

fn run_grid(cfg: &ExperimentConfig, expected: Configuration) -> Result<Report> {
    cfg.validate()?;
    if cfg.configuration != expected {
        return Err(Error::InvalidConfig(format!(
            "config declares {} but {} was requested",
            cfg.configuration.as_str(),
            expected.as_str()
        )));
    }
    let clock = Clock::start();
    let points = grid(cfg);
    let results = try_map_indexed(points.len(), cfg.execution(), |g| {
        let (rate, repeat) = points[g];
        run_single(cfg, rate, repeat, Some(&rate_dir(&cfg.output_dir, rate, repeat)))
    })?;
    let (runs, pus): (Vec<RunRecord>, Vec<PuVector>) = results.into_iter().unzip();
    write_pooled_histograms(cfg, &points, &pus)?;
    let aggregate = aggregate_runs(&runs);
    finish(cfg, expected.as_str(), runs, aggregate, &clock)
}

/// Evaluates the artifacts of a single staged run in `cfg.output_dir` and
/// writes its `report.json`.
pub fn evaluate(cfg: &ExperimentConfig, rate: f64) -> Result<Report> {
    let clock = Clock::start();
    let run_seed = cfg.run_seed(0);
    let metrics = stage_evaluate(cfg, rate, run_seed, &cfg.output_dir)?;
    let runs = vec![RunRecord {
        dropout_rate: rate,
        repeat: 0,
        seed: run_seed,
        metrics,
        mode_audit: ModeAudit::default(),
    }];
    let aggregate = aggregate_runs(&runs);
    finish(cfg, "evaluate", runs, aggregate, &clock)
}

/// Configuration 1 over the rate grid and repeats.
pub fn run_config1(cfg: &ExperimentConfig) -> Result<Report> {
    run_grid(cfg, Configuration::Config1)
}

/// Configuration 2 over the rate grid and repeats.
pub fn run_config2(cfg: &ExperimentConfig) -> Result<Report> {
    run_grid(cfg, Configuration::Config2)
}

/// Runs whichever configuration the config declares.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    run_grid(cfg, cfg.configuration)
}

/// Squared Pearson correlation of PU vectors between independently trained
/// dropout targets, for every pair of grid rates and every inference count
/// in `sensitivity_inferences`. Writes `sensitivity.csv`.
pub fn run_sensitivity(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    if cfg.retrains < 2 {
        return Err(Error::InvalidConfig("sensitivity needs retrains >= 2".into()));
    }
    if cfg.sensitivity_inferences.is_empty() {
        return Err(Error::InvalidConfig("sensitivity_inferences is empty".into()));
    }
    let clock = Clock::start();
    let run_seed = cfg.run_seed(0);
    let prep = prepare_data(cfg, run_seed)?;
    let train_set = prep.train();
    let test = prep.test();
    let max_n = *cfg.sensitivity_inferences.iter().max().expect("non-empty");
    let rates = &cfg.dropout_rates;
    let r = cfg.retrains;

    let trained = try_map_indexed(rates.len() * r, cfg.execution(), |g| {
        let (rate, i) = (rates[g / r], g % r);
        let spec = cfg.target_spec(test.numeric_width(), &test.vocab_sizes, test.task, Some(rate))?;
        let model_seed = seed::mix(seed::derive(run_seed, "target"), i as u64);
        let model = fit_target(cfg, spec, &train_set, model_seed).stage("train target")?;
        let mut audit = ModeAudit::default();
        let quality = eval_quality(&model, &test, &mut audit, "target")?;
        let set = mc_predict(
            &model.spec,
            &model.state,
            &test.inputs,
            max_n,
            rate,
            seed::mix(seed::derive(run_seed, "mc"), i as u64),
            crate::exec::Execution::Sequential,
        )
        .stage("gen-pu")?;
        let pus = cfg
            .sensitivity_inferences
            .iter()
            .map(|&n| pu(&set.truncated(n)))
            .collect::<Result<Vec<_>>>()?;
        let mut m = MetricsReport::default();
        m.set("target_quality", quality);
        m.meta("target_seed", model_seed);
        let record = RunRecord {
            dropout_rate: rate,
            repeat: i,
            seed: model_seed,
            metrics: m,
            mode_audit: audit,
        };
        Ok::<_, Error>((record, pus))
    })?;

    let mut agg = MetricsReport::default();
    let mut rows = Vec::new();
    for (a, &ra) in rates.iter().enumerate() {
        for (b, &rb) in rates.iter().enumerate() {
            for (k, &n) in cfg.sensitivity_inferences.iter().enumerate() {
                let mut values = Vec::new();
                for i in 0..r {
                    for j in i + 1..r {
                        let pa = &trained[a * r + i].1[k].scores;
                        let pb = &trained[b * r + j].1[k].scores;
                        values.push(pearson_sq(pa, pb).stage("sensitivity")?);
                    }
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                agg.set(&format!("pearson_sq@{ra}x{rb}/n={n}"), mean);
                rows.push((ra, rb, n, mean, values));
            }
        }
    }
    agg.meta("pairs", r * (r - 1) / 2);

    fs::create_dir_all(&cfg.output_dir)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("sensitivity.csv"))?;
    w.write_record(["rate_a", "rate_b", "n_inferences", "pearson_sq_mean", "per_pair"])?;
    for (ra, rb, n, mean, values) in rows {
        let per_pair: Vec<String> = values.iter().map(f64::to_string).collect();
        w.write_record([
            ra.to_string(),
            rb.to_string(),
            n.to_string(),
            mean.to_string(),
            per_pair.join(";"),
        ])?;
    }
    w.flush()?;
    let runs = trained.into_iter().map(|(rec, _)| rec).collect();
    finish(cfg, "sensitivity", runs, agg, &clock)
}

/// Feature-layer variants compared by the ablation: every hidden FCL, the
/// bottom two, and the bottom one (counted from the input side).
pub fn ablation_variants(spec: &crate::nn::NetworkSpec, base: &FeatureSpec) -> Vec<(&'static str, FeatureSpec)> {
    let fcls = spec.hidden_fcl_indices();
    [("all_fcl", fcls.len()), ("bottom_two_fcl", 2), ("bottom_fcl", 1)]
        .into_iter()
        .map(|(name, k)| {
            (
                name,
                FeatureSpec {
                    layer_indices: fcls[..k.min(fcls.len())].to_vec(),
                    ..base.clone()
                },
            )
        })
        .collect()
}

/// Repeats the estimator experiment with features from different subsets of
/// the hidden FCLs, reporting accuracy and estimator weight counts.
pub fn run_layer_ablation(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let clock = Clock::start();
    let points = grid(cfg);
    let runs = try_map_indexed(points.len(), cfg.execution(), |g| {
        let (rate, repeat) = points[g];
        let run_seed = cfg.run_seed(repeat);
        let prep = prepare_data(cfg, run_seed)?;
        let targets = train_targets(cfg, &prep, rate, run_seed)?;
        let deployed = &targets.deployed;
        if deployed.spec.hidden_fcl_indices().len() < 2 {
            return Err(Error::InvalidConfig("layer ablation needs at least 2 hidden FCLs".into()));
        }
        let test = prep.test();
        let (train_rows, eval_rows) = prep.estimator_rows();
        let train_ids: Vec<u64> = train_rows.iter().map(|&r| test.ids[r]).collect();
        let eval_ids: Vec<u64> = eval_rows.iter().map(|&r| test.ids[r]).collect();
        let mut audit = ModeAudit::default();
        let (labeler, name) = targets.labeler();
        let (_, scores) = generate_pu(cfg, labeler, &test.inputs, rate, run_seed, &mut audit, name)?;
        let (raw, stats) = capture_all(deployed, &test.inputs, &train_rows, &mut audit, "deployed")?;
        let base = cfg.features.resolve(&deployed.spec)?;
        let mut m = MetricsReport::default();
        m.set("dropout_rate", rate);
        m.meta("seed", run_seed);
        for (variant, fs) in ablation_variants(&deployed.spec, &base) {
            let features = features_for(&raw, &stats, &fs)?;
            m.set(
                &format!("{variant}/weight_count"),
                weight_count(features.cols(), &cfg.estimator.hidden) as f64,
            );
            m.set(&format!("{variant}/feature_width"), features.cols() as f64);
            for &mode in &cfg.estimator.modes {
                let model = fit_estimator(
                    cfg,
                    mode,
                    &features.select_rows(&train_rows),
                    &scores.select(&train_rows),
                    run_seed,
                )?;
                let mut vm = MetricsReport::default();
                evaluate_estimator(
                    &model,
                    &features.select_rows(&eval_rows),
                    &scores.select(&eval_rows),
                    &train_ids,
                    &eval_ids,
                    &mut vm,
                )?;
                for (k, v) in vm.metrics {
                    m.set(&format!("{variant}/{k}"), v);
                }
            }
        }
        Ok::<_, Error>(RunRecord {
            dropout_rate: rate,
            repeat,
            seed: run_seed,
            metrics: m,
            mode_audit: audit,
        })
    })?;
    let aggregate = aggregate_runs(&runs);
    finish(cfg, "layer_ablation", runs, aggregate, &clock)
}

/// Ensemble PU from `ensemble_size` independently seeded targets without
/// dropout, next to dropout PU for each grid rate. Writes `ensemble.csv`.
pub fn run_ensemble_baseline(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    if cfg.ensemble_size < 2 {
        return Err(Error::InvalidConfig("ensemble_size must be >= 2".into()));
    }
    let clock = Clock::start();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for repeat in 0..cfg.seeds {
        let run_seed = cfg.run_seed(repeat);
        let prep = prepare_data(cfg, run_seed)?;
        let train_set = prep.train();
        let test = prep.test();
        let spec = cfg.target_spec(test.numeric_width(), &test.vocab_sizes, test.task, None)?;
        let ens_seed = seed::derive(run_seed, "ensemble");
        let members = try_map_indexed(cfg.ensemble_size, cfg.execution(), |m| {
            let s = if cfg.ensemble_identical_seeds {
                ens_seed
            } else {
                seed::mix(ens_seed, m as u64)
            };
            fit_target(cfg, spec.clone(), &train_set, s)
                .stage("train ensemble")
                .map(|Model { spec, state, .. }| (spec, state))
        })?;
        let set = ensemble_predict(&members, &test.inputs, cfg.execution()).stage("ensemble")?;
        let scores = pu(&set)?;
        let (mean, sd) = summary_stats(&scores.scores)?;
        let degenerate = scores.scores.iter().all(|&v| v == 0.0);
        let mut m = MetricsReport::default();
        m.set("ensemble_pu_mean", mean);
        m.set("ensemble_pu_sd", sd);
        m.set("ensemble_degenerate", f64::from(u8::from(degenerate)));
        m.set("ensemble_size", cfg.ensemble_size as f64);
        m.meta("source", "ensemble");
        m.meta("seed", run_seed);
        rows.push(("ensemble".to_string(), None, repeat, mean, sd));
        runs.push(RunRecord {
            dropout_rate: 0.0,
            repeat,
            seed: run_seed,
            metrics: m,
            mode_audit: ModeAudit::default(),
        });

        let dropout = try_map_indexed(cfg.dropout_rates.len(), cfg.execution(), |k| {
            let rate = cfg.dropout_rates[k];
            let dspec = cfg.target_spec(test.numeric_width(), &test.vocab_sizes, test.task, Some(rate))?;
            let model = fit_target(cfg, dspec, &train_set, seed::derive(run_seed, "target"))
                .stage("train target")?;
            let mut audit = ModeAudit::default();
            let (_, s) = generate_pu(cfg, &model, &test.inputs, rate, run_seed, &mut audit, "target")?;
            let (mean, sd) = summary_stats(&s.scores)?;
            Ok::<_, Error>((rate, mean, sd, audit))
        })?;
        for (rate, mean, sd, audit) in dropout {
            let mut m = MetricsReport::default();
            m.set("dropout_pu_mean", mean);
            m.set("dropout_pu_sd", sd);
            m.meta("source", "mc_dropout");
            m.meta("seed", run_seed);
            rows.push(("mc_dropout".to_string(), Some(rate), repeat, mean, sd));
            runs.push(RunRecord {
                dropout_rate: rate,
                repeat,
                seed: run_seed,
                metrics: m,
                mode_audit: audit,
            });
        }
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("ensemble.csv"))?;
    w.write_record(["source", "dropout_rate", "repeat", "pu_mean", "pu_sd"])?;
    for (source, rate, repeat, mean, sd) in rows {
        w.write_record([
            source,
            rate.map(|r| r.to_string()).unwrap_or_default(),
            repeat.to_string(),
            mean.to_string(),
            sd.to_string(),
        ])?;
    }
    w.flush()?;
    let mut aggregate = aggregate_runs(&runs);
    if runs.iter().any(|r| r.metrics.get("ensemble_degenerate") == Some(1.0)) {
        aggregate.meta("ensemble_degenerate", "true");
    }
    finish(cfg, "ensemble_baseline", runs, aggregate, &clock)
}
