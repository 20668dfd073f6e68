use serde::{Deserialize, Serialize};

use super::forward::ForwardMode;
use super::loss::{loss_and_grad, LossKind};
use super::spec::NetworkSpec;
use super::state::{Gradients, NetworkState};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};
use crate::seed;

use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epoch indices (0-based) at which the learning rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn new(loss: LossKind) -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.001,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1 must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be > 0");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }

    /// Seed of the shuffle for `epoch`.
    pub fn shuffle_seed(&self, epoch: usize) -> u64 {
        seed::mix(seed::derive(self.seed, "shuffle"), epoch as u64)
    }

    fn dropout_seed(&self, epoch: usize, batch: usize) -> u64 {
        seed::mix(seed::mix(seed::derive(self.seed, "dropout"), epoch as u64), batch as u64)
    }
}

/// One bias-corrected Adam update at learning rate `lr`; increments the step counter.
pub fn adam_step(state: &mut NetworkState, grads: &Gradients, config: &TrainConfig, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let moments = std::mem::take(&mut state.moments);
    let mut moments = moments;
    for ((p, g), (m, v)) in state.params_mut().into_iter().zip(&grads.0).zip(moments.iter_mut()) {
        debug_assert_eq!(p.shape(), g.shape());
        let pd = p.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for j in 0..pd.len() {
            let gj = g.data()[j];
            md[j] = b1 * md[j] + (1.0 - b1) * gj;
            vd[j] = b2 * vd[j] + (1.0 - b2) * gj * gj;
            let mhat = md[j] / c1;
            let vhat = vd[j] / c2;
            pd[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    state.moments = moments;
}

/// Per-epoch mean training losses.
pub type History = Vec<f64>;

/// Initializes from `config.seed` and trains.
pub fn train(
    spec: &NetworkSpec,
    inputs: &Tensor2D,
    labels: &Tensor2D,
    config: &TrainConfig,
) -> Result<(NetworkState, History)> {
    let mut state = NetworkState::init(spec, seed::derive(config.seed, "init"))?;
    let history = train_from(spec, &mut state, inputs, labels, config)?;
    Ok((state, history))
}

/// Continues training an existing state with mini-batch Adam.
///
/// Each epoch shuffles with [`TrainConfig::shuffle_seed`] so any epoch can be
/// replayed on its own.
pub fn train_from(
    spec: &NetworkSpec,
    state: &mut NetworkState,
    inputs: &Tensor2D,
    labels: &Tensor2D,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if labels.rows() != n {
        return Err(Error::Label(format!("{} labels for {n} inputs", labels.rows())));
    }
    if config.batch_size > n {
        return Err(Error::InvalidConfig(format!(
            "batch_size {} exceeds dataset size {n}",
            config.batch_size
        )));
    }
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(config.shuffle_seed(epoch)));
        let lr = config.learning_rate_at(epoch);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = inputs.select_rows(chunk);
            let y = labels.select_rows(chunk);
            let mode = ForwardMode::Train {
                seed: config.dropout_seed(epoch, b),
            };
            let (loss, grads, stats) = loss_and_grad(spec, state, &x, &y, config.loss, mode)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += loss * chunk.len() as f64;
            adam_step(state, &grads, config, lr);
            state.update_running_stats(&stats);
        }
        if !state.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(total / n as f64);
    }
    Ok(history)
}
