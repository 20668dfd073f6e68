use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec};
use super::state::{LayerState, NetworkState, BN_EPSILON};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};
use crate::seed;

/// How a forward pass treats dropout and batch norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    /// Dropout at each layer's own rate, batch statistics in batch norm.
    Train { seed: u64 },
    /// No dropout, running statistics in batch norm. Deterministic.
    Eval,
    /// Dropout at `rate` in every dropout layer, running statistics in batch
    /// norm. Deterministic given `seed`.
    McDropout { rate: f64, seed: u64 },
}

impl ForwardMode {
    pub fn samples_dropout(&self) -> bool {
        !matches!(self, ForwardMode::Eval)
    }
}

/// Post-activation outputs of the requested layers for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: ForwardMode,
    pub activations: BTreeMap<usize, Tensor2D>,
    /// `(layer, batch mean, batch variance)` for every batch-norm layer run
    /// in train mode; feed to [`NetworkState::update_running_stats`].
    pub batch_stats: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

pub(crate) struct BnCache {
    pub xhat: Tensor2D,
    pub inv_std: Vec<f64>,
    pub batch_statistics: bool,
}

/// Everything backpropagation needs from a forward pass.
pub(crate) struct Tape {
    /// Input to the first non-embedding layer.
    pub input0: Tensor2D,
    pub outputs: Vec<Tensor2D>,
    pub masks: Vec<Option<Vec<f64>>>,
    pub bn: Vec<Option<BnCache>>,
    pub emb_indices: Vec<Vec<usize>>,
    pub batch_stats: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

/// Runs `batch` through the network.
///
/// Dropout uses inverted scaling: kept activations are multiplied by
/// `1 / (1 - r)`, so eval mode needs no rescaling. The mask of dropout layer
/// `i` is drawn from a stream seeded with `mix(mode seed, i)`.
pub fn forward(
    spec: &NetworkSpec,
    state: &NetworkState,
    batch: &Tensor2D,
    mode: ForwardMode,
    trace_layers: &BTreeSet<usize>,
) -> Result<(Tensor2D, ForwardTrace)> {
    if let Some(&bad) = trace_layers.iter().find(|&&i| i >= spec.layers.len()) {
        return Err(Error::InvalidLayer {
            index: bad,
            reason: format!("network has {} layers", spec.layers.len()),
        });
    }
    let mut tape = run(spec, state, batch, mode)?;
    let activations = trace_layers
        .iter()
        .map(|&i| (i, tape.outputs[i].clone()))
        .collect();
    let predictions = tape.outputs.pop().expect("at least one layer");
    Ok((
        predictions,
        ForwardTrace {
            mode,
            activations,
            batch_stats: tape.batch_stats,
        },
    ))
}

/// Forward pass returning only the predictions.
pub fn predict(
    spec: &NetworkSpec,
    state: &NetworkState,
    batch: &Tensor2D,
    mode: ForwardMode,
) -> Result<Tensor2D> {
    let mut tape = run(spec, state, batch, mode)?;
    Ok(tape.outputs.pop().expect("at least one layer"))
}

pub(crate) fn run(
    spec: &NetworkSpec,
    state: &NetworkState,
    batch: &Tensor2D,
    mode: ForwardMode,
) -> Result<Tape> {
    spec.validate()?;
    if state.layers.len() != spec.layers.len() {
        return Err(Error::shape(
            format!("state with {} layers", spec.layers.len()),
            format!("{} layers", state.layers.len()),
        ));
    }
    if batch.cols() != spec.batch_cols() {
        return Err(Error::shape(
            format!("{} input columns", spec.batch_cols()),
            format!("{} columns", batch.cols()),
        ));
    }
    if let ForwardMode::McDropout { rate, .. } = mode {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
    }

    let n = batch.rows();
    let n_emb = spec.embedding_count();
    let mut outputs = Vec::with_capacity(spec.layers.len());
    let mut masks = Vec::with_capacity(spec.layers.len());
    let mut bn = Vec::with_capacity(spec.layers.len());
    let mut emb_indices = Vec::with_capacity(n_emb);
    let mut batch_stats = Vec::new();

    for (i, layer) in spec.layers[..n_emb].iter().enumerate() {
        let (LayerSpec::Embedding { vocab_size, width }, LayerState::Embedding { table }) =
            (layer, &state.layers[i])
        else {
            unreachable!("validated embedding prefix");
        };
        let mut idx = Vec::with_capacity(n);
        let mut out = Tensor2D::zeros(n, *width);
        for r in 0..n {
            let v = batch.get(r, i);
            if v < 0.0 || v.fract() != 0.0 || v >= *vocab_size as f64 {
                return Err(Error::shape(
                    format!("category index in [0, {vocab_size}) in column {i}"),
                    format!("{v} at row {r}"),
                ));
            }
            let k = v as usize;
            idx.push(k);
            out.row_mut(r).copy_from_slice(table.row(k));
        }
        emb_indices.push(idx);
        outputs.push(out);
        masks.push(None);
        bn.push(None);
    }

    let input0 = if n_emb == 0 {
        batch.clone()
    } else {
        let dense_cols: Vec<usize> = (n_emb..batch.cols()).collect();
        let dense = batch.select_cols(&dense_cols);
        let mut parts: Vec<&Tensor2D> = outputs.iter().collect();
        parts.push(&dense);
        Tensor2D::hconcat(&parts)?
    };

    for (i, layer) in spec.layers.iter().enumerate().skip(n_emb) {
        let x = if i == n_emb { &input0 } else { &outputs[i - 1] };
        let mut mask = None;
        let mut cache = None;
        let y = match (layer, &state.layers[i]) {
            (LayerSpec::Dense { .. }, LayerState::Dense { weight, bias }) => {
                let mut y = x.matmul(weight);
                y.add_row_broadcast(bias.data());
                y
            }
            (LayerSpec::Relu, _) => x.map(|v| v.max(0.0)),
            (LayerSpec::Dropout { rate: own }, _) => {
                let rate = match mode {
                    ForwardMode::Train { .. } => Some((*own, mode_seed(mode))),
                    ForwardMode::McDropout { rate, seed } => Some((rate, seed)),
                    ForwardMode::Eval => None,
                };
                match rate {
                    Some((r, s)) if r > 0.0 => {
                        let m = dropout_mask(x.data().len(), r, seed::mix(s, i as u64));
                        let mut y = x.clone();
                        y.data_mut().iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                        mask = Some(m);
                        y
                    }
                    _ => x.clone(),
                }
            }
            (
                LayerSpec::BatchNorm,
                LayerState::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                },
            ) => {
                let cols = x.cols();
                let use_batch = matches!(mode, ForwardMode::Train { .. });
                let (mean, var) = if use_batch {
                    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
                    let mut var = vec![0.0; cols];
                    for r in 0..n {
                        for (c, v) in x.row(r).iter().enumerate() {
                            var[c] += (v - mean[c]).powi(2);
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n as f64);
                    batch_stats.push((i, mean.clone(), var.clone()));
                    (mean, var)
                } else {
                    (running_mean.data().to_vec(), running_var.data().to_vec())
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                let mut xhat = x.clone();
                for r in 0..n {
                    for (c, v) in xhat.row_mut(r).iter_mut().enumerate() {
                        *v = (*v - mean[c]) * inv_std[c];
                    }
                }
                let mut y = xhat.clone();
                for r in 0..n {
                    for (c, v) in y.row_mut(r).iter_mut().enumerate() {
                        *v = *v * scale.data()[c] + shift.data()[c];
                    }
                }
                cache = Some(BnCache {
                    xhat,
                    inv_std,
                    batch_statistics: use_batch,
                });
                y
            }
            (LayerSpec::Softmax, _) => softmax_rows(x),
            (LayerSpec::Sigmoid, _) => x.map(sigmoid),
            (l, _) => {
                return Err(Error::shape(
                    format!("parameters for {} layer {i}", l.name()),
                    "mismatched layer state",
                ))
            }
        };
        outputs.push(y);
        masks.push(mask);
        bn.push(cache);
    }

    Ok(Tape {
        input0,
        outputs,
        masks,
        bn,
        emb_indices,
        batch_stats,
    })
}

fn mode_seed(mode: ForwardMode) -> u64 {
    match mode {
        ForwardMode::Train { seed } | ForwardMode::McDropout { seed, .. } => seed,
        ForwardMode::Eval => 0,
    }
}

/// Scale factors: `0` for dropped units, `1 / (1 - rate)` for kept ones.
fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut y = x.clone();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{MlpOptions, TaskKind};

    #[test]
    fn identity_dense_layer() {
        let spec = NetworkSpec {
            input_width: 2,
            layers: vec![LayerSpec::Dense { width: 2 }, LayerSpec::Dense { width: 1 }],
            task: TaskKind::Regression,
        };
        let mut state = NetworkState::init(&spec, 0).unwrap();
        if let LayerState::Dense { weight, bias } = &mut state.layers[0] {
            *weight = Tensor2D::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
            *bias = Tensor2D::zeros(1, 2);
        }
        let x = Tensor2D::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (_, trace) = forward(&spec, &state, &x, ForwardMode::Eval, &[0].into()).unwrap();
        assert_eq!(trace.activations[&0].row(0), &[1.0, 2.0]);
    }

    fn dropout_net(rate: f64) -> (NetworkSpec, NetworkState) {
        let spec = NetworkSpec::mlp(
            3,
            &[16, 8],
            TaskKind::Multiclass { classes: 3 },
            &MlpOptions {
                dropout: Some(rate),
                batch_norm: true,
                embeddings: vec![],
            },
        );
        let state = NetworkState::init(&spec, 1).unwrap();
        (spec, state)
    }

    fn batch() -> Tensor2D {
        Tensor2D::from_vec(5, 3, (0..15).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn rate_zero_mc_matches_eval() {
        let (spec, state) = dropout_net(0.3);
        let eval = predict(&spec, &state, &batch(), ForwardMode::Eval).unwrap();
        let mc = predict(&spec, &state, &batch(), ForwardMode::McDropout { rate: 0.0, seed: 5 }).unwrap();
        assert_eq!(eval, mc);
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let (spec, state) = dropout_net(0.3);
        let m = |s| predict(&spec, &state, &batch(), ForwardMode::McDropout { rate: 0.5, seed: s }).unwrap();
        assert_eq!(m(3), m(3));
        assert_ne!(m(3), m(4));
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let (spec, state) = dropout_net(0.3);
        let p = predict(&spec, &state, &batch(), ForwardMode::McDropout { rate: 0.4, seed: 2 }).unwrap();
        for r in 0..p.rows() {
            assert!(p.row(r).iter().all(|&v| v >= 0.0));
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_dropout_draw_mean_near_one() {
        // Input 1 fanned out to 10,000 ones by a dense layer of unit weights.
        let spec = NetworkSpec {
            input_width: 1,
            layers: vec![
                LayerSpec::Dense { width: 10_000 },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { width: 1 },
            ],
            task: TaskKind::Regression,
        };
        let mut state = NetworkState::init(&spec, 0).unwrap();
        if let LayerState::Dense { weight, .. } = &mut state.layers[0] {
            *weight = Tensor2D::filled(1, 10_000, 1.0);
        }
        let x = Tensor2D::filled(1, 1, 1.0);
        for s in 0..20 {
            let mode = ForwardMode::McDropout { rate: 0.5, seed: s };
            let (_, tr) = forward(&spec, &state, &x, mode, &[1].into()).unwrap();
            let out = tr.activations[&1].data();
            assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
            let mean = out.iter().sum::<f64>() / 1e4;
            assert!((0.94..=1.06).contains(&mean), "seed {s}: {mean}");
        }
    }

    #[test]
    fn shape_and_rate_errors() {
        let (spec, state) = dropout_net(0.3);
        let bad = Tensor2D::zeros(2, 4);
        assert!(matches!(
            predict(&spec, &state, &bad, ForwardMode::Eval),
            Err(Error::InputShape { .. })
        ));
        assert!(matches!(
            predict(&spec, &state, &batch(), ForwardMode::McDropout { rate: 1.0, seed: 0 }),
            Err(Error::InvalidRate(_))
        ));
        assert!(forward(&spec, &state, &batch(), ForwardMode::Eval, &[99].into()).is_err());
    }

    #[test]
    fn batch_norm_eval_is_affine() {
        let spec = NetworkSpec {
            input_width: 2,
            layers: vec![
                LayerSpec::Dense { width: 2 },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::Dense { width: 1 },
            ],
            task: TaskKind::Regression,
        };
        let mut state = NetworkState::init(&spec, 4).unwrap();
        if let LayerState::BatchNorm {
            running_mean,
            running_var,
            ..
        } = &mut state.layers[1]
        {
            *running_mean = Tensor2D::from_rows(&[vec![0.5, -0.5]]).unwrap();
            *running_var = Tensor2D::from_rows(&[vec![4.0, 0.25]]).unwrap();
        }
        let trace_of = |x: Vec<f64>| {
            let t = Tensor2D::from_rows(&[x]).unwrap();
            let (_, tr) = forward(&spec, &state, &t, ForwardMode::Eval, &[0, 1].into()).unwrap();
            (tr.activations[&0].row(0).to_vec(), tr.activations[&1].row(0).to_vec())
        };
        let (pre, post) = trace_of(vec![0.3, -1.2]);
        let want = [(pre[0] - 0.5) / (4.0f64 + BN_EPSILON).sqrt(), (pre[1] + 0.5) / (0.25f64 + BN_EPSILON).sqrt()];
        assert!((post[0] - want[0]).abs() < 1e-12 && (post[1] - want[1]).abs() < 1e-12);
    }
}
