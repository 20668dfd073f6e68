//! Datasets: IDX image files, rating CSVs with a declared schema, synthetic
//! generators, and the two-level train/test split.

pub mod idx;
pub mod ratings;
pub mod split;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{TaskKind, Tensor2D};

pub use idx::{load_idx, parse_idx, write_idx, IdxArray};
pub use ratings::{CategoryMap, RatingLoader, RatingSchema};
pub use split::{split, SplitPlan};
pub use synthetic::{gen_synthetic, SyntheticTask};

/// Examples with their inputs and labels.
///
/// `inputs` holds one column per categorical feature (category index as a
/// real number) followed by the dense numeric columns, matching the layout a
/// network with an embedding prefix expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<u64>,
    pub inputs: Tensor2D,
    /// Vocabulary size per categorical column, index 0 reserved for unknown.
    pub vocab_sizes: Vec<usize>,
    pub labels: Tensor2D,
    pub task: TaskKind,
}

impl Dataset {
    pub fn new(
        ids: Vec<u64>,
        inputs: Tensor2D,
        vocab_sizes: Vec<usize>,
        labels: Tensor2D,
        task: TaskKind,
    ) -> Result<Self> {
        let ds = Self {
            ids,
            inputs,
            vocab_sizes,
            labels,
            task,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if self.inputs.rows() != n || self.labels.rows() != n {
            return Err(Error::shape(
                format!("{n} rows in inputs and labels"),
                format!("{} inputs, {} labels", self.inputs.rows(), self.labels.rows()),
            ));
        }
        if self.vocab_sizes.len() > self.inputs.cols() {
            return Err(Error::shape("categorical columns within inputs", "too many vocabularies"));
        }
        for (c, &vocab) in self.vocab_sizes.iter().enumerate() {
            for r in 0..n {
                let v = self.inputs.get(r, c);
                if v < 0.0 || v.fract() != 0.0 || v >= vocab as f64 {
                    return Err(Error::Label(format!(
                        "category {v} at row {r}, column {c} outside vocabulary of {vocab}"
                    )));
                }
            }
        }
        if let TaskKind::Multiclass { classes } = self.task {
            if let Some(v) = self
                .labels
                .data()
                .iter()
                .find(|&&v| v < 0.0 || v.fract() != 0.0 || v >= classes as f64)
            {
                return Err(Error::Label(format!("class {v} outside [0, {classes})")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Dense numeric columns (everything after the categorical columns).
    pub fn numeric_width(&self) -> usize {
        self.inputs.cols() - self.vocab_sizes.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            inputs: self.inputs.select_rows(rows),
            vocab_sizes: self.vocab_sizes.clone(),
            labels: self.labels.select_rows(rows),
            task: self.task,
        }
    }

    /// Class index per example for classification tasks.
    pub fn class_labels(&self) -> Vec<usize> {
        self.labels.data().iter().map(|&v| v as usize).collect()
    }
}

/// Where a pipeline dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { task: SyntheticTask, n: usize },
    Idx {
        images: String,
        labels: String,
        #[serde(default)]
        limit: Option<usize>,
    },
    Ratings { path: String, schema: String },
}

impl DatasetSource {
    /// Loads or generates the dataset; synthetic data is seeded with `seed`.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic { task, n } => Ok(gen_synthetic(task, *n, seed)),
            DatasetSource::Idx {
                images,
                labels,
                limit,
            } => idx::idx_dataset(&load_idx(images)?, &load_idx(labels)?, *limit),
            DatasetSource::Ratings { path, schema } => {
                let schema = RatingSchema::parse(&std::fs::read_to_string(schema)?)?;
                let mut loader = RatingLoader::new(schema);
                loader.load(std::fs::File::open(path)?)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DatasetSource::Synthetic { task, n } => format!("synthetic {} (n={n})", task.name()),
            DatasetSource::Idx { images, .. } => format!("idx {images}"),
            DatasetSource::Ratings { path, .. } => format!("ratings {path}"),
        }
    }
}
