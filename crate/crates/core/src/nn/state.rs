use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};
use crate::seed;

/// Batch-norm running statistics momentum.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;
/// Half-width of the uniform embedding initializer.
pub const EMBEDDING_INIT: f64 = 0.05;

/// Parameters of one layer. Layers without parameters carry [`LayerState::Stateless`].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerState {
    Stateless,
    /// `weight` is `in × out`, `bias` is `1 × out`.
    Dense { weight: Tensor2D, bias: Tensor2D },
    BatchNorm {
        scale: Tensor2D,
        shift: Tensor2D,
        running_mean: Tensor2D,
        running_var: Tensor2D,
    },
    /// `vocab_size × width`.
    Embedding { table: Tensor2D },
}

/// Mutable parameters of a network plus the Adam accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
    /// First and second moments, aligned with [`NetworkState::params`].
    pub moments: Vec<(Tensor2D, Tensor2D)>,
    pub step: u64,
}

/// Per-parameter gradients, aligned with [`NetworkState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor2D>);

impl NetworkState {
    /// He-uniform for dense layers feeding a ReLU (directly or through batch
    /// norm), Glorot-uniform for other dense layers, zero biases,
    /// `U(-0.05, 0.05)` embeddings, unit scale / zero shift batch norm.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let in_widths = spec.layer_input_widths();
        let out_widths = spec.layer_widths();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let mut rng = seed::rng(seed::mix(seed, i as u64));
                match layer {
                    LayerSpec::Dense { width } => {
                        let fan_in = in_widths[i];
                        let feeds_relu = matches!(
                            spec.layers.get(i + 1),
                            Some(LayerSpec::Relu | LayerSpec::BatchNorm)
                        );
                        let limit = if feeds_relu {
                            (6.0 / fan_in as f64).sqrt()
                        } else {
                            (6.0 / (fan_in + width) as f64).sqrt()
                        };
                        let data = (0..fan_in * width)
                            .map(|_| rng.random_range(-limit..limit))
                            .collect();
                        LayerState::Dense {
                            weight: Tensor2D::from_vec(fan_in, *width, data).expect("sized"),
                            bias: Tensor2D::zeros(1, *width),
                        }
                    }
                    LayerSpec::BatchNorm => {
                        let w = out_widths[i];
                        LayerState::BatchNorm {
                            scale: Tensor2D::filled(1, w, 1.0),
                            shift: Tensor2D::zeros(1, w),
                            running_mean: Tensor2D::zeros(1, w),
                            running_var: Tensor2D::filled(1, w, 1.0),
                        }
                    }
                    LayerSpec::Embedding { vocab_size, width } => {
                        let data = (0..vocab_size * width)
                            .map(|_| rng.random_range(-EMBEDDING_INIT..EMBEDDING_INIT))
                            .collect();
                        LayerState::Embedding {
                            table: Tensor2D::from_vec(*vocab_size, *width, data).expect("sized"),
                        }
                    }
                    _ => LayerState::Stateless,
                }
            })
            .collect();
        let mut state = Self {
            layers,
            moments: Vec::new(),
            step: 0,
        };
        state.moments = state
            .params()
            .iter()
            .map(|p| (Tensor2D::zeros(p.rows(), p.cols()), Tensor2D::zeros(p.rows(), p.cols())))
            .collect();
        Ok(state)
    }

    /// Trainable tensors in canonical order: per layer, dense weight and
    /// bias, batch-norm scale and shift, embedding table.
    pub fn params(&self) -> Vec<&Tensor2D> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerState::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerState::BatchNorm { scale, shift, .. } => {
                    out.push(scale);
                    out.push(shift);
                }
                LayerState::Embedding { table } => out.push(table),
                LayerState::Stateless => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2D> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerState::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerState::BatchNorm { scale, shift, .. } => {
                    out.push(scale);
                    out.push(shift);
                }
                LayerState::Embedding { table } => out.push(table),
                LayerState::Stateless => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }

    /// Every tensor of the state, trainable or not, in checkpoint order:
    /// layer tensors first, then the Adam moments.
    pub fn all_tensors(&self) -> Vec<&Tensor2D> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerState::Dense { weight, bias } => out.extend([weight, bias]),
                LayerState::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                } => out.extend([scale, shift, running_mean, running_var]),
                LayerState::Embedding { table } => out.push(table),
                LayerState::Stateless => {}
            }
        }
        for (m, v) in &self.moments {
            out.extend([m, v]);
        }
        out
    }

    /// Rebuilds a state from tensors in [`NetworkState::all_tensors`] order,
    /// checking every shape against `spec`.
    pub fn from_tensors(spec: &NetworkSpec, tensors: Vec<Tensor2D>, step: u64) -> Result<Self> {
        let template = Self::init(spec, 0)?;
        let expected: Vec<(usize, usize)> = template.all_tensors().iter().map(|t| t.shape()).collect();
        if expected.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (i, (want, got)) in expected.iter().zip(&tensors).enumerate() {
            if *want != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected shape {want:?}, found {:?}",
                    got.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("counted");
        let layers = template
            .layers
            .iter()
            .map(|l| match l {
                LayerState::Dense { .. } => LayerState::Dense {
                    weight: next(),
                    bias: next(),
                },
                LayerState::BatchNorm { .. } => LayerState::BatchNorm {
                    scale: next(),
                    shift: next(),
                    running_mean: next(),
                    running_var: next(),
                },
                LayerState::Embedding { .. } => LayerState::Embedding { table: next() },
                LayerState::Stateless => LayerState::Stateless,
            })
            .collect();
        let moments = (0..template.moments.len()).map(|_| (next(), next())).collect();
        Ok(Self {
            layers,
            moments,
            step,
        })
    }

    /// Folds batch statistics from a training forward pass into the running
    /// statistics of each batch-norm layer.
    pub fn update_running_stats(&mut self, batch_stats: &[(usize, Vec<f64>, Vec<f64>)]) {
        for (index, mean, var) in batch_stats {
            if let LayerState::BatchNorm {
                running_mean,
                running_var,
                ..
            } = &mut self.layers[*index]
            {
                for (r, m) in running_mean.data_mut().iter_mut().zip(mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                for (r, v) in running_var.data_mut().iter_mut().zip(var) {
                    *r = ((1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v).max(0.0);
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.all_tensors().iter().all(|t| t.is_finite())
    }
}

impl Gradients {
    pub fn zeros_like(state: &NetworkState) -> Self {
        Gradients(
            state
                .params()
                .iter()
                .map(|p| Tensor2D::zeros(p.rows(), p.cols()))
                .collect(),
        )
    }
}
