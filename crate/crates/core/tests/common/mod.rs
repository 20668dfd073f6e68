//! Helpers shared by integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;

use dpu_core::nn::{
    loss_and_grad, loss_value, ForwardMode, LayerSpec, LossKind, MlpOptions, NetworkSpec, NetworkState,
    TaskKind, Tensor2D,
};
use dpu_core::seed;

/// A randomly shaped small network with a batch and labels to differentiate.
pub struct GradCase {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub batch: Tensor2D,
    pub labels: Tensor2D,
    pub loss: LossKind,
    pub mode: ForwardMode,
}

/// Builds case `index`; cases cycle through tasks, optional embeddings,
/// batch norm, dropout and the three forward modes.
pub fn grad_case(index: u64) -> GradCase {
    let mut rng = seed::rng(seed::mix(0x6772_6164, index));
    let task = match index % 3 {
        0 => TaskKind::Regression,
        1 => TaskKind::BinaryClassification,
        _ => TaskKind::Multiclass {
            classes: rng.random_range(2..5),
        },
    };
    let n_emb = if index.is_multiple_of(2) { rng.random_range(1..3) } else { 0 };
    let embeddings: Vec<(usize, usize)> = (0..n_emb)
        .map(|_| (rng.random_range(3..6), rng.random_range(2..4)))
        .collect();
    let dense_cols = rng.random_range(1..5);
    let depth = rng.random_range(1..4);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..7)).collect();
    let opts = MlpOptions {
        dropout: (index % 4 != 3).then(|| rng.random_range(0.1..0.5)),
        batch_norm: index % 5 < 3,
        embeddings: embeddings.clone(),
    };
    let spec = NetworkSpec::mlp(dense_cols, &hidden, task, &opts);
    let mut state = NetworkState::init(&spec, seed::mix(index, 1)).unwrap();
    // Non-trivial batch-norm affine parameters and running statistics.
    for p in state.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let rows = rng.random_range(3..7);
    let mut data = Vec::new();
    for _ in 0..rows {
        for &(vocab, _) in &embeddings {
            data.push(rng.random_range(0..vocab) as f64);
        }
        for _ in 0..dense_cols {
            data.push(rng.random_range(-1.5..1.5));
        }
    }
    let batch = Tensor2D::from_vec(rows, n_emb + dense_cols, data).unwrap();
    let labels: Vec<f64> = (0..rows)
        .map(|_| match task {
            TaskKind::Regression => rng.random_range(-1.0..1.0),
            TaskKind::BinaryClassification => f64::from(rng.random_range(0..2u8)),
            TaskKind::Multiclass { classes } => rng.random_range(0..classes) as f64,
        })
        .collect();
    let mode = match index % 3 {
        0 | 1 => ForwardMode::Train { seed: index },
        _ => ForwardMode::McDropout {
            rate: 0.3,
            seed: index,
        },
    };
    let mode = if index % 7 == 6 { ForwardMode::Eval } else { mode };
    GradCase {
        loss: LossKind::for_task(task),
        spec,
        state,
        batch,
        labels: Tensor2D::column(&labels).unwrap(),
        mode,
    }
}

pub fn layer_kinds(spec: &NetworkSpec) -> BTreeSet<&'static str> {
    spec.layers.iter().map(LayerSpec::name).collect()
}

pub struct GradError {
    /// Worst `|a − n| / max(|a|, |n|)` over pairs differing by more than the floor.
    pub relative: f64,
    pub absolute: f64,
    pub checked: usize,
}

/// Worst mismatch between analytic and central-difference gradients,
/// ignoring relative error for pairs that agree to within `floor`.
pub fn max_gradient_error(case: &GradCase, h: f64, floor: f64) -> GradError {
    let (_, grads, _) = loss_and_grad(
        &case.spec,
        &case.state,
        &case.batch,
        &case.labels,
        case.loss,
        case.mode,
    )
    .unwrap();
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut checked = 0;
    let n_params = case.state.params().len();
    for p in 0..n_params {
        let len = case.state.params()[p].data().len();
        for k in 0..len {
            let eval = |delta: f64| {
                let mut s = case.state.clone();
                s.params_mut()[p].data_mut()[k] += delta;
                loss_value(&case.spec, &s, &case.batch, &case.labels, case.loss, case.mode).unwrap()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grads.0[p].data()[k];
            let diff = (analytic - numeric).abs();
            checked += 1;
            worst_abs = worst_abs.max(diff);
            if diff > floor {
                worst = worst.max(diff / analytic.abs().max(numeric.abs()));
            }
        }
    }
    GradError {
        relative: worst,
        absolute: worst_abs,
        checked,
    }
}
