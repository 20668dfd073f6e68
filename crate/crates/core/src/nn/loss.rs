use serde::{Deserialize, Serialize};

use super::forward::{run, ForwardMode, Tape};
use super::spec::{LayerSpec, NetworkSpec, TaskKind};
use super::state::{Gradients, LayerState, NetworkState};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SoftmaxCe,
    SigmoidBce,
}

impl LossKind {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Regression => LossKind::Mse,
            TaskKind::BinaryClassification => LossKind::SigmoidBce,
            TaskKind::Multiclass { .. } => LossKind::SoftmaxCe,
        }
    }
}

/// Converts labels into dense targets of the network's output width.
///
/// Multiclass labels may be a class-index column or one row per example of
/// length `K` (one-hot or soft); binary labels must be 0 or 1.
pub fn encode_targets(task: TaskKind, labels: &Tensor2D) -> Result<Tensor2D> {
    match task {
        TaskKind::Regression => {
            if labels.cols() != 1 {
                return Err(Error::Label(format!(
                    "regression expects one label column, got {}",
                    labels.cols()
                )));
            }
            Ok(labels.clone())
        }
        TaskKind::BinaryClassification => {
            if labels.cols() != 1 {
                return Err(Error::Label(format!(
                    "binary task expects one label column, got {}",
                    labels.cols()
                )));
            }
            if let Some(v) = labels.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Label(format!("binary label {v} is not 0 or 1")));
            }
            Ok(labels.clone())
        }
        TaskKind::Multiclass { classes } => {
            if labels.cols() == classes && classes > 1 {
                return Ok(labels.clone());
            }
            if labels.cols() != 1 {
                return Err(Error::Label(format!(
                    "multiclass({classes}) expects a class-index column or {classes} columns, got {}",
                    labels.cols()
                )));
            }
            let mut out = Tensor2D::zeros(labels.rows(), classes);
            for (r, &v) in labels.data().iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 || v >= classes as f64 {
                    return Err(Error::Label(format!(
                        "class {v} at row {r} outside [0, {classes})"
                    )));
                }
                out.set(r, v as usize, 1.0);
            }
            Ok(out)
        }
    }
}

fn check_loss(spec: &NetworkSpec, loss: LossKind) -> Result<()> {
    if LossKind::for_task(spec.task) != loss {
        return Err(Error::InvalidConfig(format!(
            "loss {loss:?} does not match task {:?}",
            spec.task
        )));
    }
    Ok(())
}

/// Mean loss and, for the combined softmax/sigmoid heads, the gradient with
/// respect to the head's input; for MSE, with respect to the final output.
fn loss_and_seed(spec: &NetworkSpec, tape: &Tape, targets: &Tensor2D, loss: LossKind) -> (f64, Tensor2D) {
    let last = spec.layers.len() - 1;
    let out = &tape.outputs[last];
    let n = out.rows() as f64;
    match loss {
        LossKind::Mse => {
            let mut g = out.clone();
            let mut total = 0.0;
            for (gv, t) in g.data_mut().iter_mut().zip(targets.data()) {
                let d = *gv - t;
                total += d * d;
                *gv = 2.0 * d / n;
            }
            (total / n, g)
        }
        LossKind::SoftmaxCe => {
            let logits = &tape.outputs[last - 1];
            let mut total = 0.0;
            for r in 0..logits.rows() {
                let z = logits.row(r);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += targets.row(r).iter().zip(z).map(|(t, zv)| t * (lse - zv)).sum::<f64>();
            }
            let mut g = out.clone();
            for (gv, t) in g.data_mut().iter_mut().zip(targets.data()) {
                *gv = (*gv - t) / n;
            }
            (total / n, g)
        }
        LossKind::SigmoidBce => {
            let logits = &tape.outputs[last - 1];
            let mut total = 0.0;
            for (z, t) in logits.data().iter().zip(targets.data()) {
                let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
                total += softplus - t * z;
            }
            let mut g = out.clone();
            for (gv, t) in g.data_mut().iter_mut().zip(targets.data()) {
                *gv = (*gv - t) / n;
            }
            (total / n, g)
        }
    }
}

/// Mean loss over the batch, without gradients.
pub fn loss_value(
    spec: &NetworkSpec,
    state: &NetworkState,
    batch: &Tensor2D,
    labels: &Tensor2D,
    loss: LossKind,
    mode: ForwardMode,
) -> Result<f64> {
    check_loss(spec, loss)?;
    let targets = encode_targets(spec.task, labels)?;
    let tape = run(spec, state, batch, mode)?;
    check_rows(&tape, &targets)?;
    Ok(loss_and_seed(spec, &tape, &targets, loss).0)
}

fn check_rows(tape: &Tape, targets: &Tensor2D) -> Result<()> {
    let out = tape.outputs.last().expect("layers");
    if targets.shape() != out.shape() {
        return Err(Error::Label(format!(
            "labels encode to {:?}, predictions are {:?}",
            targets.shape(),
            out.shape()
        )));
    }
    Ok(())
}

/// Mean loss over the batch and exact gradients for every trainable parameter.
///
/// Softmax and sigmoid heads are differentiated together with their
/// cross-entropy loss. In train mode, batch norm is differentiated through
/// the batch statistics; the trace's batch statistics are returned so the
/// caller can update running statistics.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    state: &NetworkState,
    batch: &Tensor2D,
    labels: &Tensor2D,
    loss: LossKind,
    mode: ForwardMode,
) -> Result<(f64, Gradients, Vec<(usize, Vec<f64>, Vec<f64>)>)> {
    check_loss(spec, loss)?;
    let targets = encode_targets(spec.task, labels)?;
    let tape = run(spec, state, batch, mode)?;
    check_rows(&tape, &targets)?;
    let (value, mut g) = loss_and_seed(spec, &tape, &targets, loss);

    let n_emb = spec.embedding_count();
    let last = spec.layers.len() - 1;
    let start = match spec.layers[last] {
        LayerSpec::Softmax | LayerSpec::Sigmoid => last - 1,
        _ => last,
    };
    let mut per_layer: Vec<Vec<Tensor2D>> = vec![Vec::new(); spec.layers.len()];
    let n = batch.rows() as f64;

    for i in (n_emb..=start).rev() {
        let input = if i == n_emb { &tape.input0 } else { &tape.outputs[i - 1] };
        let need_input_grad = i > n_emb || n_emb > 0;
        match (&spec.layers[i], &state.layers[i]) {
            (LayerSpec::Dense { .. }, LayerState::Dense { weight, .. }) => {
                let dw = input.t_matmul(&g);
                let db = Tensor2D::from_vec(1, g.cols(), g.column_sums())?;
                per_layer[i] = vec![dw, db];
                if need_input_grad {
                    g = g.matmul_t(weight);
                }
            }
            (LayerSpec::Relu, _) => {
                let out = &tape.outputs[i];
                g.data_mut()
                    .iter_mut()
                    .zip(out.data())
                    .for_each(|(gv, &o)| {
                        if o <= 0.0 {
                            *gv = 0.0;
                        }
                    });
            }
            (LayerSpec::Dropout { .. }, _) => {
                if let Some(mask) = &tape.masks[i] {
                    g.data_mut().iter_mut().zip(mask).for_each(|(gv, m)| *gv *= m);
                }
            }
            (LayerSpec::BatchNorm, LayerState::BatchNorm { scale, .. }) => {
                let cache = tape.bn[i].as_ref().expect("batch norm cache");
                let cols = g.cols();
                let mut dscale = vec![0.0; cols];
                let mut dshift = vec![0.0; cols];
                for r in 0..g.rows() {
                    for c in 0..cols {
                        let gv = g.get(r, c);
                        dscale[c] += gv * cache.xhat.get(r, c);
                        dshift[c] += gv;
                    }
                }
                let gamma = scale.data();
                if cache.batch_statistics {
                    // dx = inv_std / n · (n·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)),
                    // with dxhat = g·γ, Σdxhat = γ·dshift, Σ(dxhat·xhat) = γ·dscale.
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            let dxhat = g.get(r, c) * gamma[c];
                            let v = cache.inv_std[c] / n
                                * (n * dxhat - gamma[c] * dshift[c] - cache.xhat.get(r, c) * gamma[c] * dscale[c]);
                            g.set(r, c, v);
                        }
                    }
                } else {
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            let v = g.get(r, c) * gamma[c] * cache.inv_std[c];
                            g.set(r, c, v);
                        }
                    }
                }
                per_layer[i] = vec![
                    Tensor2D::from_vec(1, cols, dscale)?,
                    Tensor2D::from_vec(1, cols, dshift)?,
                ];
            }
            (l, _) => {
                return Err(Error::InvalidSpec(format!(
                    "cannot backpropagate through {} at layer {i}",
                    l.name()
                )))
            }
        }
    }

    // `g` is now the gradient with respect to `input0`.
    let mut offset = 0;
    for i in 0..n_emb {
        if let (LayerSpec::Embedding { vocab_size, width }, _) = (&spec.layers[i], &state.layers[i]) {
            let mut dt = Tensor2D::zeros(*vocab_size, *width);
            for (r, &k) in tape.emb_indices[i].iter().enumerate() {
                let src = &g.row(r)[offset..offset + width];
                dt.row_mut(k).iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
            per_layer[i] = vec![dt];
            offset += width;
        }
    }

    // Flatten in NetworkState::params order.
    let mut grads = Vec::new();
    for (i, layer) in state.layers.iter().enumerate() {
        match layer {
            LayerState::Stateless => {}
            _ => {
                let mut gs = std::mem::take(&mut per_layer[i]);
                if gs.is_empty() {
                    // Layer behind the backprop start (never for validated specs).
                    let params = match layer {
                        LayerState::Dense { weight, bias } => vec![weight, bias],
                        LayerState::BatchNorm { scale, shift, .. } => vec![scale, shift],
                        LayerState::Embedding { table } => vec![table],
                        LayerState::Stateless => vec![],
                    };
                    gs = params.iter().map(|p| Tensor2D::zeros(p.rows(), p.cols())).collect();
                }
                grads.extend(gs);
            }
        }
    }
    Ok((value, Gradients(grads), tape.batch_stats))
}
