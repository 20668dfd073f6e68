//! Dropout prediction uncertainty (DPU) estimated from neuron activation
//! strengths.
//!
//! The workflow: train a target network, label examples with the dispersion
//! of repeated MC-dropout predictions ([`uncertainty`]), harvest the target's
//! eval-mode hidden activations ([`features`]), and fit a small auxiliary
//! network that predicts the DPU in a single forward pass ([`estimator`]).
//! [`pipeline`] wires these into end-to-end experiments.

pub mod data;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod uncertainty;

pub use error::{Error, Result};
pub use exec::Execution;
