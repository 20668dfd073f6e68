//! Feed-forward network engine: layers, losses with analytic gradients, Adam,
//! and the train / eval / MC-dropout forward modes.

pub mod checkpoint;
pub mod forward;
pub mod loss;
pub mod spec;
pub mod state;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use forward::{forward, predict, ForwardMode, ForwardTrace};
pub use loss::{encode_targets, loss_and_grad, loss_value, LossKind};
pub use spec::{LayerSpec, MlpOptions, NetworkSpec, TaskKind};
pub use state::{Gradients, LayerState, NetworkState};
pub use tensor::Tensor2D;
pub use train::{adam_step, train, train_from, History, TrainConfig};
