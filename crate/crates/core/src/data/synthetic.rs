//! Seeded synthetic tasks with input-dependent uncertainty.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::nn::{TaskKind, Tensor2D};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticTask {
    /// `x ~ U[-1, 1]^dims`, `y = f(x) + σ(x)·ε` with
    /// `σ(x) = noise_low + (noise_high − noise_low)·(x₀ + 1)/2`.
    HeteroscedasticRegression {
        dims: usize,
        noise_low: f64,
        noise_high: f64,
    },
    /// `classes` isotropic Gaussian blobs with standard deviation `spread`,
    /// centered on a circle of radius 2 in the first two dimensions.
    Blobs {
        classes: usize,
        dims: usize,
        spread: f64,
    },
    /// Two blobs with a sigmoid-style 0/1 label.
    BinaryBlobs { dims: usize, spread: f64 },
}

impl SyntheticTask {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticTask::HeteroscedasticRegression { .. } => "heteroscedastic_regression",
            SyntheticTask::Blobs { .. } => "blobs",
            SyntheticTask::BinaryBlobs { .. } => "binary_blobs",
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self {
            SyntheticTask::HeteroscedasticRegression { .. } => TaskKind::Regression,
            SyntheticTask::Blobs { classes, .. } => TaskKind::Multiclass { classes: *classes },
            SyntheticTask::BinaryBlobs { .. } => TaskKind::BinaryClassification,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            SyntheticTask::HeteroscedasticRegression { dims, .. }
            | SyntheticTask::Blobs { dims, .. }
            | SyntheticTask::BinaryBlobs { dims, .. } => *dims,
        }
    }
}

/// Noise-free regression target.
pub fn regression_mean(x: &[f64]) -> f64 {
    let at = |i: usize| x.get(i).copied().unwrap_or(0.0);
    (PI * at(0)).sin() + at(1) * at(1) - 0.5 * at(2) * at(3)
}

pub fn regression_sigma(x: &[f64], low: f64, high: f64) -> f64 {
    low + (high - low) * (x[0] + 1.0) / 2.0
}

fn blob_center(class: usize, classes: usize, dims: usize) -> Vec<f64> {
    let angle = 2.0 * PI * class as f64 / classes as f64;
    let mut c = vec![0.0; dims];
    c[0] = 2.0 * angle.cos();
    if dims > 1 {
        c[1] = 2.0 * angle.sin();
    }
    c
}

/// Generates `n` examples; identical `(task, n, seed)` give identical data.
pub fn gen_synthetic(task: &SyntheticTask, n: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed::derive(seed, "synthetic"));
    let dims = task.dims().max(1);
    let mut inputs = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        match task {
            SyntheticTask::HeteroscedasticRegression {
                noise_low,
                noise_high,
                ..
            } => {
                let x: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
                let eps: f64 = StandardNormal.sample(&mut rng);
                let sigma = regression_sigma(&x, *noise_low, *noise_high);
                let y = if sigma == 0.0 {
                    regression_mean(&x)
                } else {
                    regression_mean(&x) + sigma * eps
                };
                inputs.extend(x);
                labels.push(y);
            }
            SyntheticTask::Blobs {
                classes, spread, ..
            } => {
                let k = rng.random_range(0..*classes);
                let c = blob_center(k, *classes, dims);
                inputs.extend(c.iter().map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spread * z
                }));
                labels.push(k as f64);
            }
            SyntheticTask::BinaryBlobs { spread, .. } => {
                let k = rng.random_range(0..2usize);
                let c = blob_center(k, 2, dims);
                inputs.extend(c.iter().map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spread * z
                }));
                labels.push(k as f64);
            }
        }
    }
    Dataset::new(
        (0..n as u64).collect(),
        Tensor2D::from_vec(n, dims, inputs).expect("sized"),
        Vec::new(),
        Tensor2D::column(&labels).expect("finite"),
        task.task_kind(),
    )
    .expect("generated data is valid")
}
