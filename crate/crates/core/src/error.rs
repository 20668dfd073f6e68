use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, found {found}")]
    InputShape { expected: String, found: String },

    #[error("invalid dropout rate {0}: must lie in [0, 1)")]
    InvalidRate(f64),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("need at least 2 inferences per example, got {0}")]
    InsufficientInferences(usize),

    #[error("wrong PU formula: {0}")]
    WrongFormula(String),

    #[error("malformed distribution at example {example}, inference {inference}: row sums to {sum}")]
    MalformedDistribution {
        example: usize,
        inference: usize,
        sum: f64,
    },

    #[error("incompatible ensemble: {0}")]
    IncompatibleEnsemble(String),

    #[error("layer {index} cannot be captured: {reason}")]
    InvalidLayer { index: usize, reason: String },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::InputShape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while running (I/O, divergence).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            Error::Divergence { .. } | Error::Io(_) | Error::Checkpoint(_) => false,
            _ => true,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
