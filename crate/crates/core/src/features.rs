//! Activation-strength features for the estimator.
//!
//! Post-ReLU outputs of selected fully-connected layers are captured in eval
//! mode and turned into binary "activated" indicators and/or per-neuron
//! z-scored values. Column order is every binary block (in layer order)
//! followed by every value block.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, ForwardMode, NetworkSpec, NetworkState, Tensor2D};
use crate::uncertainty::sig9;

/// Standard deviations below this are treated as zero.
pub const MIN_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub layer_indices: Vec<usize>,
    pub use_binary: bool,
    pub use_values: bool,
}

impl FeatureSpec {
    /// Both feature kinds from every hidden fully-connected layer.
    pub fn all_layers(spec: &NetworkSpec) -> Self {
        Self {
            layer_indices: spec.hidden_fcl_indices(),
            use_binary: true,
            use_values: true,
        }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if !self.use_binary && !self.use_values {
            return Err(Error::InvalidConfig(
                "feature spec needs binary and/or value features".into(),
            ));
        }
        if self.layer_indices.is_empty() {
            return Err(Error::InvalidConfig("feature spec selects no layers".into()));
        }
        check_layers(spec, &self.layer_indices)
    }

    pub fn width(&self, spec: &NetworkSpec) -> usize {
        let widths = spec.layer_widths();
        let neurons: usize = self.layer_indices.iter().map(|&i| widths[i]).sum();
        neurons * (usize::from(self.use_binary) + usize::from(self.use_values))
    }
}

fn check_layers(spec: &NetworkSpec, layers: &[usize]) -> Result<()> {
    for &i in layers {
        if !spec.is_capturable(i) {
            let reason = match spec.layers.get(i) {
                None => format!("network has {} layers", spec.layers.len()),
                Some(l) => format!("{} layer is not a post-ReLU fully-connected output", l.name()),
            };
            return Err(Error::InvalidLayer { index: i, reason });
        }
    }
    Ok(())
}

/// Eval-mode post-ReLU activations, one block of columns per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RawActivations {
    /// `(layer index, width)` per block, in column order.
    pub layers: Vec<(usize, usize)>,
    pub values: Tensor2D,
}

impl RawActivations {
    /// Column range of `layer`, if captured.
    fn block(&self, layer: usize) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for &(l, w) in &self.layers {
            if l == layer {
                return Some(start..start + w);
            }
            start += w;
        }
        None
    }

    /// The captured activations restricted to `layers`, in that order.
    pub fn restrict(&self, layers: &[usize]) -> Result<Self> {
        let mut cols = Vec::new();
        let mut blocks = Vec::new();
        for &l in layers {
            let range = self.block(l).ok_or_else(|| Error::InvalidLayer {
                index: l,
                reason: "layer was not captured".into(),
            })?;
            blocks.push((l, range.len()));
            cols.extend(range);
        }
        Ok(Self {
            layers: blocks,
            values: self.values.select_cols(&cols),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            layers: self.layers.clone(),
            values: self.values.select_rows(rows),
        }
    }
}

/// Captures post-ReLU activations of `layer_indices` with dropout disabled.
pub fn capture_activations(
    spec: &NetworkSpec,
    state: &NetworkState,
    inputs: &Tensor2D,
    layer_indices: &[usize],
) -> Result<RawActivations> {
    check_layers(spec, layer_indices)?;
    let set: BTreeSet<usize> = layer_indices.iter().copied().collect();
    let (_, trace) = forward(spec, state, inputs, ForwardMode::Eval, &set)?;
    let parts: Vec<&Tensor2D> = layer_indices.iter().map(|i| &trace.activations[i]).collect();
    Ok(RawActivations {
        layers: layer_indices
            .iter()
            .zip(&parts)
            .map(|(&i, t)| (i, t.cols()))
            .collect(),
        values: Tensor2D::hconcat(&parts)?,
    })
}

/// 1 where the activation is strictly positive, else 0.
pub fn binarize(raw: &Tensor2D) -> Tensor2D {
    raw.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Per-neuron mean and Bessel-corrected standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub layers: Vec<(usize, usize)>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn zero_variance(&self) -> Vec<bool> {
        self.std.iter().map(|&s| s < MIN_STD).collect()
    }

    /// Statistics for a subset of the layers, in the given order.
    pub fn restrict(&self, layers: &[usize]) -> Result<Self> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut blocks = Vec::new();
        for &l in layers {
            let mut start = 0;
            let mut found = false;
            for &(bl, w) in &self.layers {
                if bl == l {
                    mean.extend_from_slice(&self.mean[start..start + w]);
                    std.extend_from_slice(&self.std[start..start + w]);
                    blocks.push((l, w));
                    found = true;
                    break;
                }
                start += w;
            }
            if !found {
                return Err(Error::InvalidLayer {
                    index: l,
                    reason: "layer has no normalization statistics".into(),
                });
            }
        }
        Ok(Self {
            layers: blocks,
            mean,
            std,
        })
    }
}

/// Fits z-score statistics; call on the estimator's training split only.
pub fn fit_normalization(raw: &RawActivations) -> NormalizationStats {
    let v = &raw.values;
    let n = v.rows();
    let mean: Vec<f64> = v
        .column_sums()
        .iter()
        .map(|s| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    let mut ss = vec![0.0; v.cols()];
    for r in 0..n {
        for (c, x) in v.row(r).iter().enumerate() {
            ss[c] += (x - mean[c]).powi(2);
        }
    }
    let std = ss
        .iter()
        .map(|s| if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 })
        .collect();
    NormalizationStats {
        layers: raw.layers.clone(),
        mean,
        std,
    }
}

/// `(v − mean) / sd` per neuron; zero-variance neurons map to 0.
pub fn apply_normalization(raw: &RawActivations, stats: &NormalizationStats) -> Result<Tensor2D> {
    if raw.layers != stats.layers || raw.values.cols() != stats.mean.len() {
        return Err(Error::shape(
            format!("{} columns in layers {:?}", stats.mean.len(), stats.layers),
            format!("{} columns in layers {:?}", raw.values.cols(), raw.layers),
        ));
    }
    let mut out = raw.values.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = if stats.std[c] < MIN_STD {
                0.0
            } else {
                (*v - stats.mean[c]) / stats.std[c]
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Binary,
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnName {
    pub layer: usize,
    pub neuron: usize,
    pub kind: FeatureKind,
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FeatureKind::Binary => "bin",
            FeatureKind::Value => "val",
        };
        write!(f, "layer{}_n{}_{}", self.layer, self.neuron, kind)
    }
}

impl std::str::FromStr for ColumnName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            line: 1,
            message: format!("bad feature column name {s:?}"),
        };
        let rest = s.strip_prefix("layer").ok_or_else(bad)?;
        let (layer, rest) = rest.split_once("_n").ok_or_else(bad)?;
        let (neuron, kind) = rest.split_once('_').ok_or_else(bad)?;
        Ok(ColumnName {
            layer: layer.parse().map_err(|_| bad())?,
            neuron: neuron.parse().map_err(|_| bad())?,
            kind: match kind {
                "bin" => FeatureKind::Binary,
                "val" => FeatureKind::Value,
                _ => return Err(bad()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor2D,
    pub manifest: Vec<ColumnName>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            manifest: self.manifest.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.manifest.iter().map(ToString::to_string))?;
        for r in 0..self.rows() {
            w.write_record(self.values.row(r).iter().zip(&self.manifest).map(|(v, c)| {
                match c.kind {
                    FeatureKind::Binary => format!("{v}"),
                    FeatureKind::Value => sig9(*v),
                }
            }))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let manifest = r
            .headers()?
            .iter()
            .map(str::parse)
            .collect::<Result<Vec<ColumnName>>>()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for field in rec.iter() {
                data.push(field.parse::<f64>().map_err(|e| Error::Parse {
                    line: line + 2,
                    message: e.to_string(),
                })?);
            }
            rows += 1;
        }
        Ok(Self {
            values: Tensor2D::from_vec(rows, manifest.len(), data)?,
            manifest,
        })
    }

    /// One column name per line.
    pub fn manifest_text(&self) -> String {
        self.manifest.iter().map(|c| format!("{c}\n")).collect()
    }
}

/// Concatenates the requested feature blocks.
///
/// `raw` may hold more layers than `spec` selects; `stats` must be present
/// exactly when value features are requested and cover the selected layers.
pub fn build_features(
    raw: &RawActivations,
    spec: &FeatureSpec,
    stats: Option<&NormalizationStats>,
) -> Result<FeatureMatrix> {
    if !spec.use_binary && !spec.use_values {
        return Err(Error::InvalidConfig(
            "feature spec needs binary and/or value features".into(),
        ));
    }
    if spec.use_values != stats.is_some() {
        return Err(Error::InvalidConfig(
            "normalization stats must be given exactly when value features are used".into(),
        ));
    }
    let sel = raw.restrict(&spec.layer_indices)?;
    let mut parts = Vec::new();
    let mut manifest = Vec::new();
    let names = |kind| {
        sel.layers
            .iter()
            .flat_map(move |&(layer, w)| (0..w).map(move |neuron| ColumnName { layer, neuron, kind }))
            .collect::<Vec<_>>()
    };
    if spec.use_binary {
        parts.push(binarize(&sel.values));
        manifest.extend(names(FeatureKind::Binary));
    }
    if let Some(stats) = stats {
        let stats = stats.restrict(&spec.layer_indices)?;
        parts.push(apply_normalization(&sel, &stats)?);
        manifest.extend(names(FeatureKind::Value));
    }
    let refs: Vec<&Tensor2D> = parts.iter().collect();
    Ok(FeatureMatrix {
        values: Tensor2D::hconcat(&refs)?,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, LayerState, MlpOptions, TaskKind};

    fn raw(layers: Vec<(usize, usize)>, rows: &[Vec<f64>]) -> RawActivations {
        RawActivations {
            layers,
            values: Tensor2D::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn binarize_examples() {
        let t = Tensor2D::from_rows(&[vec![0.0, 0.3, 7.2], vec![0.0, 0.0, 1e-300]]).unwrap();
        let b = binarize(&t);
        assert_eq!(b.row(0), &[0.0, 1.0, 1.0]);
        assert_eq!(b.row(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalization_examples() {
        let r = raw(vec![(2, 2)], &[vec![0.0, 5.0], vec![2.0, 5.0]]);
        let stats = fit_normalization(&r);
        assert!((stats.std[0] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(stats.zero_variance(), vec![false, true]);
        let z = apply_normalization(&r, &stats).unwrap();
        assert!((z.get(0, 0) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((z.get(1, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(z.col_values(1), vec![0.0, 0.0]);

        let wrong = raw(vec![(2, 3)], &[vec![0.0, 1.0, 2.0]]);
        assert!(matches!(apply_normalization(&wrong, &stats), Err(Error::InputShape { .. })));
    }

    fn hand_net() -> (NetworkSpec, NetworkState) {
        let spec = NetworkSpec {
            input_width: 2,
            layers: vec![
                LayerSpec::Dense { width: 2 },
                LayerSpec::Relu,
                LayerSpec::Dense { width: 1 },
            ],
            task: TaskKind::Regression,
        };
        let mut state = NetworkState::init(&spec, 0).unwrap();
        if let LayerState::Dense { weight, bias } = &mut state.layers[0] {
            *weight = Tensor2D::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap();
            *bias = Tensor2D::from_rows(&[vec![0.5, -3.0]]).unwrap();
        }
        (spec, state)
    }

    #[test]
    fn capture_matches_hand_computation() {
        let (spec, state) = hand_net();
        let x = Tensor2D::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let a = capture_activations(&spec, &state, &x, &[1]).unwrap();
        // n0 = 1·1 + 2·2 + 0.5 = 5.5; n1 = relu(1·−1 + 2·0.5 − 3) = 0
        assert_eq!(a.values.row(0), &[5.5, 0.0]);
        assert_eq!(a, capture_activations(&spec, &state, &x, &[1]).unwrap());
        assert!(matches!(
            capture_activations(&spec, &state, &x, &[2]),
            Err(Error::InvalidLayer { index: 2, .. })
        ));
        assert!(matches!(
            capture_activations(&spec, &state, &x, &[0]),
            Err(Error::InvalidLayer { index: 0, .. })
        ));
    }

    #[test]
    fn embedding_layer_is_not_capturable() {
        let spec = NetworkSpec::mlp(
            1,
            &[3],
            TaskKind::Regression,
            &MlpOptions {
                embeddings: vec![(4, 2)],
                ..Default::default()
            },
        );
        assert!(FeatureSpec {
            layer_indices: vec![0],
            use_binary: true,
            use_values: false
        }
        .validate(&spec)
        .is_err());
    }

    #[test]
    fn widths_and_column_order() {
        let r = raw(vec![(2, 2), (5, 1)], &[vec![0.0, 1.0, 2.0], vec![3.0, 0.0, 4.0]]);
        let stats = fit_normalization(&r);
        let both = FeatureSpec {
            layer_indices: vec![2, 5],
            use_binary: true,
            use_values: true,
        };
        let fm = build_features(&r, &both, Some(&stats)).unwrap();
        let names: Vec<String> = fm.manifest.iter().map(ToString::to_string).collect();
        assert_eq!(
            names,
            ["layer2_n0_bin", "layer2_n1_bin", "layer5_n0_bin", "layer2_n0_val", "layer2_n1_val", "layer5_n0_val"]
        );
        assert_eq!(fm.values.row(0)[..3], [0.0, 1.0, 1.0]);

        let bin_only = FeatureSpec {
            layer_indices: vec![5],
            use_binary: true,
            use_values: false,
        };
        assert!(build_features(&r, &bin_only, Some(&stats)).is_err());
        assert_eq!(build_features(&r, &bin_only, None).unwrap().cols(), 1);
    }

    #[test]
    fn feature_csv_round_trip() {
        let r = raw(vec![(1, 2)], &[vec![0.0, 1.0 / 3.0], vec![2.5, 0.0], vec![1.0, 9.0]]);
        let stats = fit_normalization(&r);
        let spec = FeatureSpec {
            layer_indices: vec![1],
            use_binary: true,
            use_values: true,
        };
        let fm = build_features(&r, &spec, Some(&stats)).unwrap();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back.manifest, fm.manifest);
        for (a, b) in back.values.data().iter().zip(fm.values.data()) {
            assert_eq!(sig9(*a), sig9(*b));
        }
        assert_eq!(fm.manifest_text().lines().count(), 4);
    }
}
