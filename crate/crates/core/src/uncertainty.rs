//! Dropout prediction uncertainty labels.
//!
//! [`mc_predict`] runs `N` stochastic dropout inferences over a frozen model
//! (or [`ensemble_predict`] collects one eval-mode prediction per ensemble
//! member); [`pu_std`] and [`pu_kl`] reduce each example's `N` predictions to
//! a scalar PU score.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::nn::{predict, ForwardMode, NetworkSpec, NetworkState, TaskKind, Tensor2D};
use crate::seed;

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;
/// Row-sum tolerance for probability vectors.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_INFERENCES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionSource {
    McDropout { rate: f64, base_seed: u64 },
    Ensemble { model_count: usize },
}

impl PredictionSource {
    pub fn label(&self) -> &'static str {
        match self {
            PredictionSource::McDropout { .. } => "mc_dropout",
            PredictionSource::Ensemble { .. } => "ensemble",
        }
    }

    pub fn dropout_rate(&self) -> Option<f64> {
        match self {
            PredictionSource::McDropout { rate, .. } => Some(*rate),
            PredictionSource::Ensemble { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    /// One real per prediction (regression output or binary probability).
    Scalar,
    /// A probability vector per prediction.
    Distribution,
}

/// `N` predictions for every example.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    n_examples: usize,
    n_inferences: usize,
    width: usize,
    kind: PredictionKind,
    /// `[example][inference][component]`, row-major.
    values: Vec<f64>,
    pub source: PredictionSource,
}

impl PredictionSet {
    /// Builds a set from `values[e][i]` (each of length 1 for scalars).
    pub fn new(
        kind: PredictionKind,
        values: &[Vec<Vec<f64>>],
        source: PredictionSource,
    ) -> Result<Self> {
        let n_examples = values.len();
        let n_inferences = values.first().map_or(0, Vec::len);
        let width = values
            .first()
            .and_then(|v| v.first())
            .map_or(1, Vec::len);
        if values.iter().any(|e| e.len() != n_inferences) {
            return Err(Error::shape(
                format!("{n_inferences} predictions per example"),
                "ragged prediction lists",
            ));
        }
        if values.iter().flatten().any(|p| p.len() != width) {
            return Err(Error::shape(format!("prediction width {width}"), "ragged predictions"));
        }
        if kind == PredictionKind::Scalar && width != 1 {
            return Err(Error::shape("scalar predictions", format!("width {width}")));
        }
        let flat: Vec<f64> = values.iter().flatten().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite prediction".into()));
        }
        Ok(Self {
            n_examples,
            n_inferences,
            width,
            kind,
            values: flat,
            source,
        })
    }

    /// Builds a set from one `examples × width` prediction matrix per inference.
    pub fn from_inferences(
        kind: PredictionKind,
        inferences: &[Tensor2D],
        source: PredictionSource,
    ) -> Result<Self> {
        let n_inferences = inferences.len();
        let (n_examples, width) = inferences.first().map_or((0, 1), |t| t.shape());
        if inferences.iter().any(|t| t.shape() != (n_examples, width)) {
            return Err(Error::shape(
                format!("{n_examples}x{width} per inference"),
                "mismatched inference shapes",
            ));
        }
        if kind == PredictionKind::Scalar && width != 1 {
            return Err(Error::shape("scalar predictions", format!("width {width}")));
        }
        let mut values = Vec::with_capacity(n_examples * n_inferences * width);
        for e in 0..n_examples {
            for t in inferences {
                values.extend_from_slice(t.row(e));
            }
        }
        Ok(Self {
            n_examples,
            n_inferences,
            width,
            kind,
            values,
            source,
        })
    }

    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    pub fn n_inferences(&self) -> usize {
        self.n_inferences
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> PredictionKind {
        self.kind
    }

    /// All `N · width` values for example `e`.
    pub fn example(&self, e: usize) -> &[f64] {
        let len = self.n_inferences * self.width;
        &self.values[e * len..(e + 1) * len]
    }

    pub fn prediction(&self, e: usize, i: usize) -> &[f64] {
        &self.example(e)[i * self.width..(i + 1) * self.width]
    }

    /// The set restricted to the first `n` inferences.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_inferences);
        let mut values = Vec::with_capacity(self.n_examples * n * self.width);
        for e in 0..self.n_examples {
            values.extend_from_slice(&self.example(e)[..n * self.width]);
        }
        Self {
            n_inferences: n,
            values,
            ..self.clone()
        }
    }

    /// Eval-style point prediction per example from inference `i` alone.
    pub fn inference(&self, i: usize) -> Tensor2D {
        let mut data = Vec::with_capacity(self.n_examples * self.width);
        for e in 0..self.n_examples {
            data.extend_from_slice(self.prediction(e, i));
        }
        Tensor2D::from_vec(self.n_examples, self.width, data).expect("sized")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuFormula {
    Std,
    Kl,
}

impl PuFormula {
    pub fn as_str(self) -> &'static str {
        match self {
            PuFormula::Std => "std",
            PuFormula::Kl => "kl",
        }
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Multiclass { .. } => PuFormula::Kl,
            _ => PuFormula::Std,
        }
    }
}

/// Per-example PU scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PuVector {
    pub scores: Vec<f64>,
    pub formula: PuFormula,
}

impl PuVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            formula: self.formula,
        }
    }
}

/// Bessel-corrected sample standard deviation of each example's predictions.
pub fn pu_std(preds: &PredictionSet) -> Result<PuVector> {
    if preds.kind != PredictionKind::Scalar || preds.width != 1 {
        return Err(Error::WrongFormula(format!(
            "std needs scalar predictions, got width-{} {:?}",
            preds.width, preds.kind
        )));
    }
    let n = preds.n_inferences;
    if n < 2 {
        return Err(Error::InsufficientInferences(n));
    }
    let scores = (0..preds.n_examples)
        .map(|e| {
            // Welford accumulation
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for (k, &y) in preds.example(e).iter().enumerate() {
                let d = y - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (y - mean);
            }
            (m2.max(0.0) / (n - 1) as f64).sqrt()
        })
        .collect();
    Ok(PuVector {
        scores,
        formula: PuFormula::Std,
    })
}

/// Sum over inferences of `KL(p̂ᵢ ‖ p̄)` in nats, `p̄` the mean distribution.
pub fn pu_kl(preds: &PredictionSet) -> Result<PuVector> {
    if preds.kind != PredictionKind::Distribution {
        return Err(Error::WrongFormula("kl needs probability-vector predictions".into()));
    }
    let n = preds.n_inferences;
    if n < 2 {
        return Err(Error::InsufficientInferences(n));
    }
    let k = preds.width;
    let mut scores = Vec::with_capacity(preds.n_examples);
    let mut mean = vec![0.0; k];
    for e in 0..preds.n_examples {
        mean.iter_mut().for_each(|m| *m = 0.0);
        for i in 0..n {
            let p = preds.prediction(e, i);
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || p.iter().any(|&v| v < 0.0) {
                return Err(Error::MalformedDistribution {
                    example: e,
                    inference: i,
                    sum,
                });
            }
            mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
        }
        // The rounded mean of identical vectors can differ from them in the
        // last bit, which would leave a spurious positive score.
        let first = preds.prediction(e, 0);
        if (1..n).all(|i| preds.prediction(e, i) == first) {
            scores.push(0.0);
            continue;
        }
        let log_mean: Vec<f64> = mean
            .iter()
            .map(|m| (m / n as f64).max(LOG_FLOOR).ln())
            .collect();
        let mut total = 0.0;
        for i in 0..n {
            for (&p, lq) in preds.prediction(e, i).iter().zip(&log_mean) {
                if p > 0.0 {
                    total += p * (p.max(LOG_FLOOR).ln() - lq);
                }
            }
        }
        scores.push(total.max(0.0));
    }
    Ok(PuVector {
        scores,
        formula: PuFormula::Kl,
    })
}

/// [`pu_std`] for scalar sets, [`pu_kl`] for distribution sets.
pub fn pu(preds: &PredictionSet) -> Result<PuVector> {
    match preds.kind {
        PredictionKind::Scalar => pu_std(preds),
        PredictionKind::Distribution => pu_kl(preds),
    }
}

fn kind_for(task: TaskKind) -> PredictionKind {
    match task {
        TaskKind::Multiclass { .. } => PredictionKind::Distribution,
        _ => PredictionKind::Scalar,
    }
}

/// Runs `n` MC-dropout inferences; inference `i` uses draw seed
/// `mix(base_seed, i)`. Regression emits raw outputs, binary tasks
/// post-sigmoid probabilities, multiclass post-softmax vectors.
pub fn mc_predict(
    spec: &NetworkSpec,
    state: &NetworkState,
    inputs: &Tensor2D,
    n: usize,
    rate: f64,
    base_seed: u64,
    exec: Execution,
) -> Result<PredictionSet> {
    if n < 2 {
        return Err(Error::InsufficientInferences(n));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidRate(rate));
    }
    let outputs = try_map_indexed(n, exec, |i| {
        let mode = ForwardMode::McDropout {
            rate,
            seed: seed::mix(base_seed, i as u64),
        };
        predict(spec, state, inputs, mode)
    })?;
    PredictionSet::from_inferences(
        kind_for(spec.task),
        &outputs,
        PredictionSource::McDropout { rate, base_seed },
    )
}

/// One eval-mode prediction per ensemble member.
pub fn ensemble_predict(
    models: &[(NetworkSpec, NetworkState)],
    inputs: &Tensor2D,
    exec: Execution,
) -> Result<PredictionSet> {
    if models.len() < 2 {
        return Err(Error::IncompatibleEnsemble(format!(
            "need at least 2 models, got {}",
            models.len()
        )));
    }
    let spec = &models[0].0;
    if let Some(i) = models.iter().position(|(s, _)| s != spec) {
        return Err(Error::IncompatibleEnsemble(format!(
            "model {i} has a different architecture from model 0"
        )));
    }
    let outputs = try_map_indexed(models.len(), exec, |i| {
        predict(&models[i].0, &models[i].1, inputs, ForwardMode::Eval)
    })?;
    PredictionSet::from_inferences(
        kind_for(spec.task),
        &outputs,
        PredictionSource::Ensemble {
            model_count: models.len(),
        },
    )
}

/// One row of a PU label CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuRecord {
    pub example_id: u64,
    pub pu: f64,
    pub formula: String,
    pub n_inferences: usize,
    pub dropout_rate: Option<f64>,
    pub source: String,
}

/// Formats with 9 significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes `example_id,pu,formula,n_inferences,dropout_rate,source`.
pub fn write_pu_csv<W: Write>(
    out: W,
    example_ids: &[u64],
    pu: &PuVector,
    n_inferences: usize,
    source: &PredictionSource,
) -> Result<()> {
    if example_ids.len() != pu.len() {
        return Err(Error::shape(
            format!("{} example ids", pu.len()),
            format!("{}", example_ids.len()),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["example_id", "pu", "formula", "n_inferences", "dropout_rate", "source"])?;
    let rate = source.dropout_rate().map(|r| r.to_string()).unwrap_or_default();
    for (id, s) in example_ids.iter().zip(&pu.scores) {
        w.write_record([
            id.to_string(),
            sig9(*s),
            pu.formula.as_str().to_string(),
            n_inferences.to_string(),
            rate.clone(),
            source.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pu_csv<R: Read>(input: R) -> Result<Vec<PuRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
