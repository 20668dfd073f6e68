//! The auxiliary uncertainty estimator: an MLP over activation features,
//! trained against PU labels either as a regression (with clipping or a log
//! transform) or as equal-frequency bucket classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSpec, NormalizationStats};
use crate::nn::checkpoint::{ByteReader, ByteWriter};
use crate::nn::{
    predict, train, Checkpoint, ForwardMode, LossKind, MlpOptions, NetworkSpec, NetworkState,
    TaskKind, Tensor2D, TrainConfig,
};
use crate::uncertainty::PuVector;

pub const DEFAULT_BUCKETS: usize = 5;
pub const DEFAULT_LOG_EPSILON: f64 = 1e-8;
const SECTION: &[u8; 4] = b"ESTM";

/// Ascending equal-frequency boundaries; bucket 0 holds the lowest PU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketBoundaries {
    pub k: usize,
    pub bounds: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boundaries at the `i/k` quantiles (`i = 1..k`) of `labels`.
pub fn fit_buckets(labels: &[f64], k: usize) -> Result<BucketBoundaries> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("bucket count must be >= 2, got {k}")));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::DegenerateLabels(format!(
            "{} distinct label values for {k} buckets",
            distinct.len()
        )));
    }
    let bounds = (1..k)
        .map(|i| quantile_sorted(&sorted, i as f64 / k as f64))
        .collect();
    Ok(BucketBoundaries { k, bounds })
}

/// Bucket `i` covers `[b_i, b_{i+1})`: a value equal to a boundary goes to
/// the bucket above it. Values outside the fitted range land in the end
/// buckets.
pub fn assign_bucket(pu: f64, bounds: &BucketBoundaries) -> usize {
    bounds
        .bounds
        .partition_point(|&b| b <= pu)
        .min(bounds.k - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Regression,
    Classification,
}

/// Regression label transform. Estimates are always clipped to the
/// training-label range after the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelTransform {
    Clip,
    LogScale { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    pub hidden_widths: Vec<usize>,
    pub transform: LabelTransform,
    pub bucket_count: usize,
    pub train: TrainConfig,
}

impl EstimatorConfig {
    /// `[100, 50]` MLP, 50 epochs of Adam at 0.001 decayed by 0.1 at epochs
    /// 30 and 40.
    pub fn new(mode: EstimatorMode) -> Self {
        let mut train = TrainConfig::new(match mode {
            EstimatorMode::Regression => LossKind::Mse,
            EstimatorMode::Classification => LossKind::SoftmaxCe,
        });
        train.epochs = 50;
        train.batch_size = 32;
        train.learning_rate = 0.001;
        train.lr_decay_epochs = vec![30, 40];
        train.lr_decay_factor = 0.1;
        Self {
            mode,
            hidden_widths: vec![100, 50],
            transform: LabelTransform::Clip,
            bucket_count: DEFAULT_BUCKETS,
            train,
        }
    }
}

/// Weights of an MLP with a single output, biases ignored.
pub fn weight_count(input_width: usize, hidden_widths: &[usize]) -> usize {
    let mut widths = vec![input_width];
    widths.extend_from_slice(hidden_widths);
    widths.push(1);
    widths.windows(2).map(|w| w[0] * w[1]).sum()
}

/// A trained estimator with all of its preprocessing frozen inside.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub mode: EstimatorMode,
    pub transform: LabelTransform,
    /// Training-label range used for clipping.
    pub label_min: f64,
    pub label_max: f64,
    /// Mean and standard deviation of the transformed training targets; the
    /// network regresses the standardized target.
    pub target_mean: f64,
    pub target_std: f64,
    pub buckets: Option<BucketBoundaries>,
    pub feature_spec: Option<FeatureSpec>,
    pub normalization: Option<NormalizationStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimates {
    Regression(Vec<f64>),
    Classification {
        buckets: Vec<usize>,
        probabilities: Tensor2D,
    },
}

impl Estimates {
    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Estimates::Regression(v) => Some(v),
            Estimates::Classification { .. } => None,
        }
    }

    pub fn buckets(&self) -> Option<&[usize]> {
        match self {
            Estimates::Regression(_) => None,
            Estimates::Classification { buckets, .. } => Some(buckets),
        }
    }
}

impl LabelTransform {
    fn forward(&self, pu: f64) -> f64 {
        match self {
            LabelTransform::Clip => pu,
            LabelTransform::LogScale { epsilon } => (pu + epsilon).ln(),
        }
    }

    fn inverse(&self, z: f64) -> f64 {
        match self {
            LabelTransform::Clip => z,
            LabelTransform::LogScale { epsilon } => z.exp() - epsilon,
        }
    }
}

/// Trains on `features` / `labels`, which must both be the estimator's
/// training split.
pub fn train_estimator(
    features: &FeatureMatrix,
    labels: &PuVector,
    config: &EstimatorConfig,
) -> Result<EstimatorModel> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), format!("{}", labels.len())));
    }
    if n == 0 {
        return Err(Error::DegenerateLabels("no training examples".into()));
    }
    let pu = &labels.scores;
    let label_min = pu.iter().copied().fold(f64::INFINITY, f64::min);
    let label_max = pu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut train_cfg = config.train.clone();
    train_cfg.batch_size = train_cfg.batch_size.min(n);

    match config.mode {
        EstimatorMode::Regression => {
            if let LabelTransform::LogScale { epsilon } = config.transform {
                if !(epsilon > 0.0) {
                    return Err(Error::InvalidConfig("log transform epsilon must be > 0".into()));
                }
            }
            let targets: Vec<f64> = pu.iter().map(|&v| config.transform.forward(v)).collect();
            let mean = targets.iter().sum::<f64>() / n as f64;
            let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
            let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            let y: Vec<f64> = targets.iter().map(|t| (t - mean) / std).collect();
            let spec = NetworkSpec::mlp(
                features.cols(),
                &config.hidden_widths,
                TaskKind::Regression,
                &MlpOptions::default(),
            );
            train_cfg.loss = LossKind::Mse;
            let (state, _) = train(&spec, &features.values, &Tensor2D::column(&y)?, &train_cfg)?;
            Ok(EstimatorModel {
                spec,
                state,
                mode: config.mode,
                transform: config.transform,
                label_min,
                label_max,
                target_mean: mean,
                target_std: std,
                buckets: None,
                feature_spec: None,
                normalization: None,
            })
        }
        EstimatorMode::Classification => {
            let buckets = fit_buckets(pu, config.bucket_count)?;
            let y: Vec<f64> = pu.iter().map(|&v| assign_bucket(v, &buckets) as f64).collect();
            let spec = NetworkSpec::mlp(
                features.cols(),
                &config.hidden_widths,
                TaskKind::Multiclass {
                    classes: config.bucket_count,
                },
                &MlpOptions::default(),
            );
            train_cfg.loss = LossKind::SoftmaxCe;
            let (state, _) = train(&spec, &features.values, &Tensor2D::column(&y)?, &train_cfg)?;
            Ok(EstimatorModel {
                spec,
                state,
                mode: config.mode,
                transform: config.transform,
                label_min,
                label_max,
                target_mean: 0.0,
                target_std: 1.0,
                buckets: Some(buckets),
                feature_spec: None,
                normalization: None,
            })
        }
    }
}

impl EstimatorModel {
    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    /// Maps a raw regression network output to a PU estimate: undo the
    /// standardization and label transform, then clip to the training range.
    pub fn postprocess(&self, raw: f64) -> f64 {
        let z = raw * self.target_std + self.target_mean;
        self.transform.inverse(z).clamp(self.label_min, self.label_max)
    }

    /// Single eval-mode forward pass; no dropout sampling.
    pub fn estimate(&self, features: &FeatureMatrix) -> Result<Estimates> {
        if features.cols() != self.input_width() {
            return Err(Error::shape(
                format!("{} feature columns", self.input_width()),
                format!("{}", features.cols()),
            ));
        }
        let out = predict(&self.spec, &self.state, &features.values, ForwardMode::Eval)?;
        Ok(match self.mode {
            EstimatorMode::Regression => {
                Estimates::Regression(out.data().iter().map(|&r| self.postprocess(r)).collect())
            }
            EstimatorMode::Classification => Estimates::Classification {
                buckets: out.argmax_rows(),
                probabilities: out,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.state.param_count()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut w = ByteWriter::default();
        w.bytes(&[match self.mode {
            EstimatorMode::Regression => 0,
            EstimatorMode::Classification => 1,
        }]);
        match self.transform {
            LabelTransform::Clip => {
                w.bytes(&[0]);
                w.f64(0.0);
            }
            LabelTransform::LogScale { epsilon } => {
                w.bytes(&[1]);
                w.f64(epsilon);
            }
        }
        for v in [self.label_min, self.label_max, self.target_mean, self.target_std] {
            w.f64(v);
        }
        match &self.buckets {
            Some(b) => {
                w.u32(b.k as u32);
                w.f64s(&b.bounds);
            }
            None => w.u32(0),
        }
        let fs = match &self.feature_spec {
            Some(fs) => serde_json::to_vec(fs)?,
            None => Vec::new(),
        };
        w.u32(fs.len() as u32);
        w.bytes(&fs);
        match &self.normalization {
            Some(s) => {
                w.u32(s.layers.len() as u32);
                for &(l, width) in &s.layers {
                    w.u32(l as u32);
                    w.u32(width as u32);
                }
                w.f64s(&s.mean);
                w.f64s(&s.std);
            }
            None => w.u32(u32::MAX),
        }
        let mut ck = Checkpoint::new(self.spec.clone(), self.state.clone());
        ck.sections.push((*SECTION, w.0));
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let payload = ck
            .section(SECTION)
            .ok_or_else(|| Error::Checkpoint("no estimator section".into()))?;
        let mut r = ByteReader::new(payload);
        let mode = match r.take(1)?[0] {
            0 => EstimatorMode::Regression,
            1 => EstimatorMode::Classification,
            m => return Err(Error::Checkpoint(format!("unknown estimator mode {m}"))),
        };
        let tag = r.take(1)?[0];
        let eps = r.f64()?;
        let transform = match tag {
            0 => LabelTransform::Clip,
            1 => LabelTransform::LogScale { epsilon: eps },
            t => return Err(Error::Checkpoint(format!("unknown transform {t}"))),
        };
        let label_min = r.f64()?;
        let label_max = r.f64()?;
        let target_mean = r.f64()?;
        let target_std = r.f64()?;
        let k = r.u32()? as usize;
        let buckets = if k == 0 {
            None
        } else {
            Some(BucketBoundaries { k, bounds: r.f64s()? })
        };
        let fs_len = r.u32()? as usize;
        let feature_spec = if fs_len == 0 {
            None
        } else {
            Some(serde_json::from_slice(r.take(fs_len)?)?)
        };
        let n_layers = r.u32()?;
        let normalization = if n_layers == u32::MAX {
            None
        } else {
            let layers = (0..n_layers)
                .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
                .collect::<Result<Vec<_>>>()?;
            Some(NormalizationStats {
                layers,
                mean: r.f64s()?,
                std: r.f64s()?,
            })
        };
        Ok(Self {
            spec: ck.spec.clone(),
            state: ck.state.clone(),
            mode,
            transform,
            label_min,
            label_max,
            target_mean,
            target_std,
            buckets,
            feature_spec,
            normalization,
        })
    }
}
