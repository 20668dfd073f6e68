use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpu_core::metrics::MetricsReport;
use dpu_core::pipeline::{self, ExperimentConfig, Report};
use dpu_core::Error;

/// Dropout prediction uncertainty experiments.
#[derive(Debug, Parser)]
#[command(name = "dpu", version)]
struct Cli {
    /// Experiment config (`key: value` lines with nested sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the target (and, for config2, the side model).
    TrainTarget(RateArg),
    /// Write MC-dropout PU labels for the target test split.
    GenPu(RateArg),
    /// Write eval-mode activation features from the deployed target.
    ExtractFeatures,
    /// Train the PU estimators on the estimator training split.
    TrainEstimator,
    /// Evaluate a staged run and write report.json.
    Evaluate(RateArg),
    /// Every stage over the rate grid and repeats.
    Run,
    /// PU correlation between independently trained targets.
    Sensitivity,
    /// Estimators on features from subsets of the hidden layers.
    AblateLayers,
    /// Ensemble PU next to dropout PU.
    EnsembleBaseline,
}

#[derive(Debug, clap::Args)]
struct RateArg {
    /// Dropout rate; defaults to the first rate of the grid.
    #[arg(long)]
    rate: Option<f64>,
}

impl RateArg {
    fn resolve(&self, cfg: &ExperimentConfig) -> f64 {
        self.rate.unwrap_or(cfg.dropout_rates[0])
    }
}

fn load_config(cli: &Cli) -> dpu_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_metrics(m: &MetricsReport, format: Format) -> dpu_core::Result<()> {
    match format {
        Format::Json => println!("{}", m.to_json()?),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["metric", "value"])?;
            for (k, v) in &m.metrics {
                w.write_record([k, &v.to_string()])?;
            }
            for (k, v) in &m.metadata {
                w.write_record([k, v])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn print_report(report: &Report, cfg: &ExperimentConfig, format: Format) -> dpu_core::Result<()> {
    if format == Format::Csv {
        report.write(&cfg.output_dir, true)?;
    }
    print_metrics(&report.payload.aggregate, format)
}

fn execute(cli: &Cli) -> dpu_core::Result<()> {
    let cfg = load_config(cli)?;
    let dir = cfg.output_dir.clone();
    let run_seed = cfg.run_seed(0);
    match &cli.command {
        Command::TrainTarget(rate) => {
            let m = pipeline::stage_train_target(&cfg, rate.resolve(&cfg), run_seed, &dir)?;
            print_metrics(&m, cli.format)
        }
        Command::GenPu(rate) => {
            let pu = pipeline::stage_gen_pu(&cfg, rate.resolve(&cfg), run_seed, &dir)?;
            let mut m = MetricsReport::default();
            let (mean, sd) = dpu_core::metrics::summary_stats(&pu.scores)?;
            m.set("pu_mean", mean).set("pu_sd", sd).set("examples", pu.len() as f64);
            m.meta("pu_formula", pu.formula.as_str());
            print_metrics(&m, cli.format)
        }
        Command::ExtractFeatures => {
            let f = pipeline::stage_extract_features(&cfg, run_seed, &dir)?;
            let mut m = MetricsReport::default();
            m.set("rows", f.rows() as f64).set("columns", f.cols() as f64);
            print_metrics(&m, cli.format)
        }
        Command::TrainEstimator => {
            let models = pipeline::stage_train_estimator(&cfg, run_seed, &dir)?;
            let mut m = MetricsReport::default();
            for model in &models {
                let mode = serde_json::to_value(model.mode)?;
                m.set(&format!("{}_params", mode.as_str().unwrap_or("estimator")), model.param_count() as f64);
            }
            print_metrics(&m, cli.format)
        }
        Command::Evaluate(rate) => {
            let report = pipeline::evaluate(&cfg, rate.resolve(&cfg))?;
            print_report(&report, &cfg, cli.format)
        }
        Command::Run => print_report(&pipeline::run(&cfg)?, &cfg, cli.format),
        Command::Sensitivity => print_report(&pipeline::run_sensitivity(&cfg)?, &cfg, cli.format),
        Command::AblateLayers => print_report(&pipeline::run_layer_ablation(&cfg)?, &cfg, cli.format),
        Command::EnsembleBaseline => {
            print_report(&pipeline::run_ensemble_baseline(&cfg)?, &cfg, cli.format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if Error::is_validation(&e) { 1 } else { 2 })
        }
    }
}
