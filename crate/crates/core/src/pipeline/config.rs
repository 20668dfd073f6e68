//! Experiment configuration, read from a plain-text `key: value` file with
//! nested sections.
//!
//! ```text
//! configuration: config1
//! seed: 7
//! dataset:
//!   kind: synthetic
//!   n: 4000
//!   task:
//!     kind: heteroscedastic_regression
//!     dims: 8
//!     noise_low: 0.05
//!     noise_high: 1.0
//! target:
//!   hidden: [64, 32]
//!   train:
//!     epochs: 30
//! dropout_rates: [0.1, 0.3]
//! ```
//!
//! Every key is optional; missing keys take the desk-scale defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSource, SyntheticTask};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorMode, LabelTransform, DEFAULT_BUCKETS};
use crate::exec::Execution;
use crate::features::FeatureSpec;
use crate::nn::{LayerSpec, LossKind, MlpOptions, NetworkSpec, TaskKind, TrainConfig};
use crate::uncertainty::DEFAULT_INFERENCES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// The deployed target is trained with dropout and labels itself.
    Config1,
    /// The deployed target has no dropout; a side model trained with dropout
    /// supplies the PU labels.
    Config2,
}

impl Configuration {
    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Config1 => "config1",
            Configuration::Config2 => "config2",
        }
    }
}

/// Optimizer settings shared by the target and estimator sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.003,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, loss: LossKind, seed: u64) -> TrainConfig {
        let mut t = TrainConfig::new(loss);
        t.epochs = self.epochs;
        t.batch_size = self.batch_size;
        t.learning_rate = self.learning_rate;
        t.lr_decay_epochs = self.lr_decay_epochs.clone();
        t.lr_decay_factor = self.lr_decay_factor;
        t.seed = seed;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    /// Embedding width for every categorical input column.
    pub embedding_width: usize,
    /// Explicit layer list replacing the MLP built from `hidden`. Dropout
    /// layers in it take the rate of the grid point being run.
    pub layers: Option<Vec<LayerSpec>>,
    pub train: TrainSettings,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            batch_norm: false,
            embedding_width: 8,
            layers: None,
            train: TrainSettings::default(),
        }
    }
}

/// Activation features, with layers given as hidden-FCL positions counted
/// from the input side (0 is the bottom FCL).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    /// `None` selects every hidden FCL.
    pub fcls: Option<Vec<usize>>,
    pub use_binary: bool,
    pub use_values: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            fcls: None,
            use_binary: true,
            use_values: true,
        }
    }
}

impl FeatureSettings {
    /// Maps FCL positions to layer indices of `spec`.
    pub fn resolve(&self, spec: &NetworkSpec) -> Result<FeatureSpec> {
        let fcls = spec.hidden_fcl_indices();
        let layer_indices = match &self.fcls {
            None => fcls.clone(),
            Some(sel) => sel
                .iter()
                .map(|&k| {
                    fcls.get(k).copied().ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "feature FCL {k} requested but the target has {} hidden FCLs",
                            fcls.len()
                        ))
                    })
                })
                .collect::<Result<_>>()?,
        };
        let fs = FeatureSpec {
            layer_indices,
            use_binary: self.use_binary,
            use_values: self.use_values,
        };
        fs.validate(spec)?;
        Ok(fs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    /// One estimator is trained per listed mode.
    pub modes: Vec<EstimatorMode>,
    pub hidden: Vec<usize>,
    pub transform: LabelTransform,
    pub buckets: usize,
    pub train: TrainSettings,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let base = EstimatorConfig::new(EstimatorMode::Regression);
        Self {
            modes: vec![EstimatorMode::Regression, EstimatorMode::Classification],
            hidden: base.hidden_widths,
            transform: base.transform,
            buckets: DEFAULT_BUCKETS,
            train: TrainSettings {
                epochs: base.train.epochs,
                batch_size: base.train.batch_size,
                learning_rate: base.train.learning_rate,
                lr_decay_epochs: base.train.lr_decay_epochs,
                lr_decay_factor: base.train.lr_decay_factor,
            },
        }
    }
}

impl EstimatorSettings {
    pub fn to_config(&self, mode: EstimatorMode, seed: u64) -> EstimatorConfig {
        let mut c = EstimatorConfig::new(mode);
        c.hidden_widths = self.hidden.clone();
        c.transform = self.transform;
        c.bucket_count = self.buckets;
        c.train = self.train.to_train_config(c.train.loss, seed);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub configuration: Configuration,
    pub dataset: DatasetSource,
    /// `[train, test]` fractions; the test part is halved for the estimator.
    pub split: [f64; 2],
    pub target: TargetConfig,
    pub dropout_rates: Vec<f64>,
    pub n_inferences: usize,
    /// Inference counts compared by the sensitivity study.
    pub sensitivity_inferences: Vec<usize>,
    pub features: FeatureSettings,
    pub estimator: EstimatorSettings,
    /// Independently trained targets per rate in the sensitivity study;
    /// every pair of them is compared.
    pub retrains: usize,
    pub ensemble_size: usize,
    /// Train every ensemble member from the same seed (a degenerate
    /// ensemble, useful as a check).
    pub ensemble_identical_seeds: bool,
    pub seed: u64,
    /// Repeats per grid point, each with its own derived seed.
    pub seeds: usize,
    pub histogram_bins: usize,
    pub parallel: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            configuration: Configuration::Config1,
            dataset: DatasetSource::Synthetic {
                // Inputs 4..8 are nuisance dimensions the target must learn to
                // ignore.
                task: SyntheticTask::HeteroscedasticRegression {
                    dims: 8,
                    noise_low: 0.05,
                    noise_high: 1.0,
                },
                n: 4000,
            },
            split: [0.5, 0.5],
            target: TargetConfig::default(),
            dropout_rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            n_inferences: DEFAULT_INFERENCES,
            sensitivity_inferences: vec![10, 50, 100],
            features: FeatureSettings::default(),
            estimator: EstimatorSettings::default(),
            retrains: 3,
            ensemble_size: 10,
            ensemble_identical_seeds: false,
            seed: 0,
            seeds: 5,
            histogram_bins: 20,
            parallel: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_yaml::from_str(text).map_err(|e| Error::Parse {
            line: e.location().map_or(0, |l| l.line()),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::default()
        } else {
            Execution::Sequential
        }
    }

    /// Seed of repeat `j`.
    pub fn run_seed(&self, j: usize) -> u64 {
        crate::seed::mix(self.seed, j as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dropout_rates.is_empty() {
            return bad("dropout_rates is empty".into());
        }
        if let Some(&r) = self.dropout_rates.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::InvalidRate(r));
        }
        if self.n_inferences < 2 {
            return Err(Error::InsufficientInferences(self.n_inferences));
        }
        if let Some(&n) = self.sensitivity_inferences.iter().find(|&&n| n < 2) {
            return Err(Error::InsufficientInferences(n));
        }
        if self.seeds == 0 {
            return bad("seeds must be >= 1".into());
        }
        if self.target.hidden.is_empty() && self.target.layers.is_none() {
            return bad("target needs at least one hidden layer".into());
        }
        if self.estimator.modes.is_empty() {
            return bad("estimator.modes is empty".into());
        }
        if self.estimator.hidden.is_empty() {
            return bad("estimator.hidden is empty".into());
        }
        if self.estimator.buckets < 2 {
            return bad("estimator.buckets must be >= 2".into());
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be >= 1".into());
        }
        if let Some(layers) = &self.target.layers {
            let has_dropout = layers.iter().any(|l| matches!(l, LayerSpec::Dropout { .. }));
            match self.configuration {
                Configuration::Config1 if !has_dropout => {
                    return bad("config1 needs dropout layers in the target spec".into())
                }
                Configuration::Config2 if has_dropout => {
                    return bad("config2 needs a deployed target spec without dropout".into())
                }
                _ => {}
            }
        }
        self.target.train.to_train_config(LossKind::Mse, 0).validate()?;
        self.estimator.train.to_train_config(LossKind::Mse, 0).validate()?;
        crate::data::split(100, 0, self.split)?;
        Ok(())
    }

    /// Target architecture for a dataset; dropout at `rate` after every
    /// hidden ReLU, or none when `rate` is `None`.
    pub fn target_spec(
        &self,
        numeric_width: usize,
        vocab_sizes: &[usize],
        task: TaskKind,
        rate: Option<f64>,
    ) -> Result<NetworkSpec> {
        let spec = match &self.target.layers {
            Some(layers) => {
                let explicit = layers.iter().any(|l| matches!(l, LayerSpec::Dropout { .. }));
                let mut out = Vec::with_capacity(layers.len() + 4);
                for l in layers {
                    match l {
                        LayerSpec::Dropout { .. } => {
                            if let Some(r) = rate {
                                out.push(LayerSpec::Dropout { rate: r });
                            }
                        }
                        LayerSpec::Relu => {
                            out.push(LayerSpec::Relu);
                            if let (Some(r), false) = (rate, explicit) {
                                out.push(LayerSpec::Dropout { rate: r });
                            }
                        }
                        other => out.push(other.clone()),
                    }
                }
                NetworkSpec {
                    input_width: numeric_width,
                    layers: out,
                    task,
                }
            }
            None => NetworkSpec::mlp(
                numeric_width,
                &self.target.hidden,
                task,
                &MlpOptions {
                    dropout: rate,
                    batch_norm: self.target.batch_norm,
                    embeddings: vocab_sizes
                        .iter()
                        .map(|&v| (v, self.target.embedding_width))
                        .collect(),
                },
            ),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.target.hidden, vec![64, 32]);
        assert_eq!(c.n_inferences, 100);
        assert_eq!(c.dropout_rates, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(c.ensemble_size, 10);
        c.validate().unwrap();
    }

    #[test]
    fn nested_sections_override_defaults() {
        let c = ExperimentConfig::parse(
            "configuration: config2\nseed: 11\ndataset:\n  kind: synthetic\n  n: 500\n  task:\n    kind: blobs\n    classes: 3\n    dims: 2\n    spread: 0.5\ntarget:\n  hidden: [16]\n  train:\n    epochs: 5\nestimator:\n  modes: [classification]\n  buckets: 4\n",
        )
        .unwrap();
        assert_eq!(c.configuration, Configuration::Config2);
        assert_eq!(c.seed, 11);
        assert_eq!(c.target.hidden, vec![16]);
        assert_eq!(c.target.train.epochs, 5);
        assert_eq!(c.target.train.batch_size, 64);
        assert_eq!(c.estimator.buckets, 4);
        assert_eq!(c.estimator.train.epochs, 50);
        assert_eq!(c, ExperimentConfig::parse(&c.to_text()).unwrap());
    }

    #[test]
    fn unknown_keys_report_their_line() {
        match ExperimentConfig::parse("seed: 1\ntarget:\n  hiden: [3]\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn configuration_dropout_invariants() {
        let mut c = ExperimentConfig::default();
        c.target.layers = Some(vec![LayerSpec::Dense { width: 8 }, LayerSpec::Relu, LayerSpec::Dense { width: 1 }]);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.configuration = Configuration::Config2;
        c.validate().unwrap();
        let side = c.target_spec(4, &[], TaskKind::Regression, Some(0.2)).unwrap();
        assert_eq!(side.layers[2], LayerSpec::Dropout { rate: 0.2 });
        assert!(!c.target_spec(4, &[], TaskKind::Regression, None).unwrap().has_dropout());

        c.target.layers = Some(vec![
            LayerSpec::Dense { width: 8 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { width: 1 },
        ]);
        assert!(c.validate().is_err());
        c.configuration = Configuration::Config1;
        c.validate().unwrap();
        let s = c.target_spec(4, &[], TaskKind::Regression, Some(0.3)).unwrap();
        assert_eq!(s.layers[2], LayerSpec::Dropout { rate: 0.3 });
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.dropout_rates = vec![0.1, 1.0];
        assert!(matches!(c.validate(), Err(Error::InvalidRate(_))));
        let mut c = ExperimentConfig::default();
        c.n_inferences = 1;
        assert!(matches!(c.validate(), Err(Error::InsufficientInferences(1))));
        let mut c = ExperimentConfig::default();
        c.split = [0.7, 0.7];
        assert!(c.validate().is_err());
    }

    #[test]
    fn feature_fcls_resolve_to_layer_indices() {
        let c = ExperimentConfig::default();
        let with = c.target_spec(4, &[], TaskKind::Regression, Some(0.1)).unwrap();
        let without = c.target_spec(4, &[], TaskKind::Regression, None).unwrap();
        let f = FeatureSettings {
            fcls: Some(vec![0]),
            ..Default::default()
        };
        assert_eq!(f.resolve(&with).unwrap().layer_indices, vec![1]);
        assert_eq!(f.resolve(&without).unwrap().layer_indices, vec![1]);
        assert_eq!(FeatureSettings::default().resolve(&with).unwrap().layer_indices, vec![1, 4]);
        let bad = FeatureSettings {
            fcls: Some(vec![2]),
            ..Default::default()
        };
        assert!(bad.resolve(&with).is_err());
    }
}
