//! `report.json`: a deterministic payload plus a runtime block holding
//! everything that legitimately differs between identical runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{summary_stats, MetricsReport};

/// One forward-pass call made by the pipeline, recorded so tests can check
/// which models ever sampled dropout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub model: String,
    pub stage: String,
    pub mode: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeAudit(pub Vec<AuditEntry>);

impl ModeAudit {
    pub fn record(&mut self, model: &str, stage: &str, mode: &str) {
        self.0.push(AuditEntry {
            model: model.into(),
            stage: stage.into(),
            mode: mode.into(),
        });
    }

    /// True if any inference on `model` ran with sampled dropout masks.
    pub fn sampled_dropout(&self, model: &str) -> bool {
        self.0.iter().any(|e| e.model == model && e.mode != "eval")
    }
}

/// Metrics of one grid point (rate, repeat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dropout_rate: f64,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub mode_audit: ModeAudit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub experiment: String,
    pub config: serde_json::Value,
    pub runs: Vec<RunRecord>,
    /// Cross-seed means (and standard deviations where there are at least
    /// two seeds); per-seed values stay in `runs`.
    pub aggregate: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    pub output_dir: String,
    pub threads: usize,
    pub crate_version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub payload: Payload,
    pub runtime: Runtime,
}

pub(crate) struct Clock {
    started: SystemTime,
    instant: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            instant: Instant::now(),
        }
    }

    pub fn runtime(&self, out: &Path) -> Runtime {
        Runtime {
            started_unix_ms: self
                .started
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
            elapsed_ms: self.instant.elapsed().as_millis(),
            output_dir: out.display().to_string(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn payload_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.payload)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes `report.json`, and `report.csv` (one `run,metric,value` row
    /// per metric) when `csv` is set.
    pub fn write(&self, dir: &Path, csv: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        if csv {
            let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
            w.write_record(["run", "metric", "value"])?;
            for (name, v) in &self.payload.aggregate.metrics {
                w.write_record(["aggregate", name, &v.to_string()])?;
            }
            for r in &self.payload.runs {
                let run = format!("rate={}/repeat={}", r.dropout_rate, r.repeat);
                for (name, v) in &r.metrics.metrics {
                    w.write_record([run.as_str(), name, &v.to_string()])?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    /// `metric` from every run at `rate`, in repeat order.
    pub fn per_seed(&self, rate: f64, metric: &str) -> Vec<f64> {
        self.payload
            .runs
            .iter()
            .filter(|r| r.dropout_rate == rate)
            .filter_map(|r| r.metrics.get(metric))
            .collect()
    }
}

/// Fills `{metric}@{rate}/mean` and `/sd` for every metric in the runs.
pub(crate) fn aggregate_runs(runs: &[RunRecord]) -> MetricsReport {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (name, &v) in &r.metrics.metrics {
            groups
                .entry((name.clone(), r.dropout_rate.to_string()))
                .or_default()
                .push(v);
        }
    }
    let mut out = MetricsReport::default();
    for ((name, rate), values) in groups {
        let key = format!("{name}@{rate}");
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        out.set(&format!("{key}/mean"), mean);
        if let Ok((_, sd)) = summary_stats(&values) {
            out.set(&format!("{key}/sd"), sd);
        }
    }
    out.meta("repeats_per_rate", runs.iter().filter(|r| r.dropout_rate == runs[0].dropout_rate).count());
    out
}
