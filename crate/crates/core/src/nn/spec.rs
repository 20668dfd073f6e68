use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Affine map `x·W + b` to `width` outputs.
    Dense { width: usize },
    Relu,
    /// Inverted dropout; `rate` is the drop probability used in training.
    Dropout { rate: f64 },
    BatchNorm,
    /// Lookup table over one categorical input column.
    Embedding { vocab_size: usize, width: usize },
    Softmax,
    Sigmoid,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::BatchNorm => "batch_norm",
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    BinaryClassification,
    Multiclass { classes: usize },
}

impl TaskKind {
    pub fn output_width(self) -> usize {
        match self {
            TaskKind::Multiclass { classes } => classes,
            _ => 1,
        }
    }
}

/// Architecture of a feed-forward network.
///
/// Embedding layers, when present, form a prefix of `layers`: embedding `i`
/// reads input column `i` as a category index, and the looked-up vectors are
/// concatenated ahead of the remaining `input_width` dense columns before the
/// first non-embedding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub task: TaskKind,
}

/// Options for [`NetworkSpec::mlp`].
#[derive(Debug, Clone, Default)]
pub struct MlpOptions {
    /// Dropout rate after every hidden ReLU; `None` for no dropout layers.
    pub dropout: Option<f64>,
    pub batch_norm: bool,
    /// `(vocab_size, width)` per categorical input column.
    pub embeddings: Vec<(usize, usize)>,
}

impl NetworkSpec {
    /// Builds `dense → [batch_norm] → relu → [dropout]` per hidden width,
    /// followed by the output head for `task`.
    pub fn mlp(input_width: usize, hidden: &[usize], task: TaskKind, opts: &MlpOptions) -> Self {
        let mut layers: Vec<LayerSpec> = opts
            .embeddings
            .iter()
            .map(|&(vocab_size, width)| LayerSpec::Embedding { vocab_size, width })
            .collect();
        for &w in hidden {
            layers.push(LayerSpec::Dense { width: w });
            if opts.batch_norm {
                layers.push(LayerSpec::BatchNorm);
            }
            layers.push(LayerSpec::Relu);
            if let Some(rate) = opts.dropout {
                layers.push(LayerSpec::Dropout { rate });
            }
        }
        layers.push(LayerSpec::Dense {
            width: task.output_width(),
        });
        match task {
            TaskKind::Multiclass { .. } => layers.push(LayerSpec::Softmax),
            TaskKind::BinaryClassification => layers.push(LayerSpec::Sigmoid),
            TaskKind::Regression => {}
        }
        Self {
            input_width,
            layers,
            task,
        }
    }

    /// Same architecture with every dropout layer removed.
    pub fn without_dropout(&self) -> Self {
        Self {
            input_width: self.input_width,
            layers: self
                .layers
                .iter()
                .filter(|l| !matches!(l, LayerSpec::Dropout { .. }))
                .cloned()
                .collect(),
            task: self.task,
        }
    }

    pub fn embedding_count(&self) -> usize {
        self.layers
            .iter()
            .take_while(|l| matches!(l, LayerSpec::Embedding { .. }))
            .count()
    }

    /// Number of columns a batch must carry.
    pub fn batch_cols(&self) -> usize {
        self.embedding_count() + self.input_width
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dropout { .. }))
    }

    /// Output width of every layer. For the embedding prefix this is the
    /// embedding width; the first layer after the prefix sees the
    /// concatenated width.
    pub fn layer_widths(&self) -> Vec<usize> {
        let n_emb = self.embedding_count();
        let mut current =
            self.input_width + self.layers[..n_emb].iter().map(Self::emb_width).sum::<usize>();
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Embedding { width, .. } => *width,
                LayerSpec::Dense { width } => {
                    current = *width;
                    current
                }
                _ => current,
            })
            .collect()
    }

    /// Input width seen by each layer (embedding layers report 1).
    pub fn layer_input_widths(&self) -> Vec<usize> {
        let n_emb = self.embedding_count();
        let mut current =
            self.input_width + self.layers[..n_emb].iter().map(Self::emb_width).sum::<usize>();
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Embedding { .. } => 1,
                LayerSpec::Dense { width } => {
                    let input = current;
                    current = *width;
                    input
                }
                _ => current,
            })
            .collect()
    }

    fn emb_width(l: &LayerSpec) -> usize {
        match l {
            LayerSpec::Embedding { width, .. } => *width,
            _ => 0,
        }
    }

    pub fn output_width(&self) -> usize {
        self.layer_widths().last().copied().unwrap_or(0)
    }

    /// Indices of post-ReLU fully-connected hidden layers, bottom (closest to
    /// the input) first.
    pub fn hidden_fcl_indices(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.is_capturable(i))
            .collect()
    }

    /// Whether layer `index` is a ReLU directly fed by a dense or batch-norm layer.
    pub fn is_capturable(&self, index: usize) -> bool {
        index > 0
            && index < self.layers.len()
            && matches!(self.layers[index], LayerSpec::Relu)
            && matches!(
                self.layers[index - 1],
                LayerSpec::Dense { .. } | LayerSpec::BatchNorm
            )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let n_emb = self.embedding_count();
        if self.input_width + n_emb == 0 {
            return bad("network has no inputs".into());
        }
        let last = self.layers.len() - 1;
        let mut seen_dense = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = if i == 0 { None } else { Some(&self.layers[i - 1]) };
            match layer {
                LayerSpec::Embedding { vocab_size, width } => {
                    if i >= n_emb {
                        return bad(format!("embedding at layer {i} is not part of the input prefix"));
                    }
                    if *vocab_size == 0 || *width == 0 {
                        return bad(format!("embedding at layer {i} needs vocab_size and width >= 1"));
                    }
                }
                LayerSpec::Dense { width } => {
                    if *width == 0 {
                        return bad(format!("dense layer {i} has zero width"));
                    }
                    seen_dense = true;
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::InvalidRate(*rate));
                    }
                    if !matches!(
                        prev,
                        Some(LayerSpec::Dense { .. } | LayerSpec::Relu | LayerSpec::BatchNorm)
                    ) {
                        return bad(format!(
                            "dropout at layer {i} must follow a dense, relu or batch_norm layer"
                        ));
                    }
                }
                LayerSpec::BatchNorm => {
                    if !matches!(prev, Some(LayerSpec::Dense { .. })) {
                        return bad(format!("batch_norm at layer {i} must follow a dense layer"));
                    }
                }
                LayerSpec::Relu => {
                    if !seen_dense {
                        return bad(format!("relu at layer {i} precedes every dense layer"));
                    }
                }
                LayerSpec::Softmax | LayerSpec::Sigmoid => {
                    if i != last {
                        return bad(format!("{} must be the final layer", layer.name()));
                    }
                    if !matches!(prev, Some(LayerSpec::Dense { .. })) {
                        return bad(format!("{} must follow a dense layer", layer.name()));
                    }
                }
            }
        }
        if !seen_dense {
            return bad("network has no dense layer".into());
        }
        let out = self.output_width();
        match (self.task, &self.layers[last]) {
            (TaskKind::Multiclass { classes }, LayerSpec::Softmax) => {
                if classes < 2 || out != classes {
                    return bad(format!("multiclass({classes}) needs a softmax of width {classes} >= 2, got {out}"));
                }
            }
            (TaskKind::BinaryClassification, LayerSpec::Sigmoid) => {
                if out != 1 {
                    return bad(format!("binary task needs a sigmoid of width 1, got {out}"));
                }
            }
            (TaskKind::Regression, LayerSpec::Dense { .. }) => {
                if out != 1 {
                    return bad(format!("regression needs a single output, got {out}"));
                }
            }
            (task, layer) => {
                return bad(format!("{task:?} cannot end in a {} layer", layer.name()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_builder_layout() {
        let spec = NetworkSpec::mlp(
            4,
            &[8, 6],
            TaskKind::Multiclass { classes: 3 },
            &MlpOptions {
                dropout: Some(0.2),
                batch_norm: true,
                embeddings: vec![],
            },
        );
        spec.validate().unwrap();
        assert_eq!(spec.layers.len(), 10);
        assert_eq!(spec.hidden_fcl_indices(), vec![2, 6]);
        assert_eq!(spec.output_width(), 3);
        assert!(spec.has_dropout());
        let plain = spec.without_dropout();
        plain.validate().unwrap();
        assert!(!plain.has_dropout());
        assert_eq!(plain.hidden_fcl_indices(), vec![2, 5]);
    }

    #[test]
    fn embeddings_widen_first_dense_input() {
        let spec = NetworkSpec::mlp(
            3,
            &[5],
            TaskKind::Regression,
            &MlpOptions {
                embeddings: vec![(10, 8), (20, 8)],
                ..Default::default()
            },
        );
        spec.validate().unwrap();
        assert_eq!(spec.batch_cols(), 5);
        assert_eq!(spec.layer_input_widths()[2], 19);
        assert_eq!(spec.layer_widths(), vec![8, 8, 5, 5, 1]);
    }

    #[test]
    fn dropout_placement_rules() {
        let mut spec = NetworkSpec::mlp(2, &[3], TaskKind::Regression, &MlpOptions::default());
        spec.layers.insert(0, LayerSpec::Dropout { rate: 0.1 });
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));

        let mut spec = NetworkSpec::mlp(
            2,
            &[3],
            TaskKind::Regression,
            &MlpOptions {
                embeddings: vec![(4, 2)],
                ..Default::default()
            },
        );
        spec.layers.insert(1, LayerSpec::Dropout { rate: 0.1 });
        assert!(spec.validate().is_err());

        let spec = NetworkSpec::mlp(
            2,
            &[3],
            TaskKind::Regression,
            &MlpOptions {
                dropout: Some(1.0),
                ..Default::default()
            },
        );
        assert!(matches!(spec.validate(), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn heads_must_match_task() {
        let mut spec = NetworkSpec::mlp(2, &[3], TaskKind::BinaryClassification, &MlpOptions::default());
        spec.validate().unwrap();
        spec.task = TaskKind::Multiclass { classes: 2 };
        assert!(spec.validate().is_err());
        let spec = NetworkSpec::mlp(2, &[3], TaskKind::Multiclass { classes: 1 }, &MlpOptions::default());
        assert!(spec.validate().is_err());
    }
}
