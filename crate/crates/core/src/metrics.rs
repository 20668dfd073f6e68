//! Evaluation statistics: R², squared Pearson, accuracy, confusion matrix,
//! ROC AUC, MSE, summary statistics and histograms.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} values", a.len()), format!("{}", b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 values, got {}", a.len())));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Coefficient of determination `1 − SS_res / SS_tot`; may be negative.
pub fn r2_score(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    check_pair(labels, predictions)?;
    let m = mean(labels);
    let ss_tot: f64 = labels.iter().map(|y| (y - m).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate("labels have zero variance".into()));
    }
    let ss_res: f64 = labels
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Squared Pearson correlation, in `[0, 1]`.
pub fn pearson_sq(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sab * sab / (saa * sbb)).clamp(0.0, 1.0))
}

pub fn mse(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    if labels.len() != predictions.len() || labels.is_empty() {
        return Err(Error::shape(format!("{} values", labels.len()), format!("{}", predictions.len())));
    }
    Ok(labels
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / labels.len() as f64)
}

/// `k × k` counts, rows are labels and columns are predictions.
pub fn confusion(labels: &[usize], predicted: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if labels.len() != predicted.len() {
        return Err(Error::shape(format!("{} predictions", labels.len()), format!("{}", predicted.len())));
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&l, &p) in labels.iter().zip(predicted) {
        if l >= k || p >= k {
            return Err(Error::Label(format!("class ({l}, {p}) outside [0, {k})")));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

pub fn accuracy(labels: &[usize], predicted: &[usize]) -> Result<f64> {
    let k = labels
        .iter()
        .chain(predicted)
        .max()
        .map_or(1, |m| m + 1);
    accuracy_k(labels, predicted, k)
}

/// Accuracy with classes restricted to `[0, k)`.
pub fn accuracy_k(labels: &[usize], predicted: &[usize], k: usize) -> Result<f64> {
    let m = confusion(labels, predicted, k)?;
    if labels.is_empty() {
        return Err(Error::Degenerate("no examples".into()));
    }
    let trace: u64 = (0..k).map(|i| m[i][i]).sum();
    Ok(trace as f64 / labels.len() as f64)
}

/// Recall per class (`None` for classes with no labels).
pub fn per_class_recall(confusion: &[Vec<u64>]) -> Vec<Option<f64>> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Rank-based with midranks, `O(n log n)`.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::shape(format!("{} scores", labels.len()), format!("{}", scores.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their midrank
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Arithmetic mean and Bessel-corrected standard deviation.
pub fn summary_stats(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 values, got {}", values.len())));
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok((m, var.sqrt()))
}

/// Equal-width histogram over `[min, max]` of the values.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, u64)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

pub fn write_histogram_csv<W: Write>(out: W, hist: &[(f64, f64, u64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for (lo, hi, c) in hist {
        w.write_record([lo.to_string(), hi.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confusion_csv<W: Write>(out: W, m: &[Vec<u64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..m.len()).map(|j| format!("pred_{j}")));
    w.write_record(&header)?;
    for (i, row) in m.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Named metrics for one evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<Vec<Vec<u64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bucket_recall: Option<Vec<Option<f64>>>,
    pub metadata: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    /// Attaches a confusion matrix and its per-class recall.
    pub fn with_confusion(&mut self, m: Vec<Vec<u64>>) -> &mut Self {
        self.bucket_recall = Some(per_class_recall(&m));
        self.confusion = Some(m);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
