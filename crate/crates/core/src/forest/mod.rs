//! Random-forest regression with out-of-bag error.
//!
//! Each tree is fit to a bootstrap sample of the training rows. At every node
//! `mtry` predictor columns are sampled without replacement and the split
//! minimizing the weighted child variance of the response is taken, with
//! candidate thresholds at midpoints between consecutive distinct values.
//! Nodes with fewer than `2 * min_node_size` bootstrap rows, or a constant
//! response, become leaves.
//!
//! Tree `i` draws all of its randomness from its own ChaCha stream under
//! `ForestParams::seed`, so a forest of `n` trees is exactly the first `n`
//! trees of any larger forest with the same seed, and trees may be grown in
//! parallel without changing the result.

mod model;
mod oob;
mod tree;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use model::{Forest, MODEL_FORMAT};
pub use oob::{OobPrefixCache, OobStats};
pub use tree::{Node, Tree};

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("training set is empty")]
    Empty,
    #[error("at least 2 rows are required, got {0}")]
    TooFewRows(usize),
    #[error("mtry {mtry} outside 1..={width}")]
    MtryOutOfRange { mtry: usize, width: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("row {row} has {found} values, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("response is constant; out-of-bag error is undefined")]
    DegenerateResponse,
    #[error("no row was out-of-bag for any tree")]
    NoOobRows,
    #[error("schema mismatch: model expects {expected}, input has {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How measured times map to the regression response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResponseTransform {
    Raw,
    #[default]
    Log10,
}

impl ResponseTransform {
    pub fn apply(self, value: f64) -> f64 {
        match self {
            ResponseTransform::Raw => value,
            ResponseTransform::Log10 => value.log10(),
        }
    }

    pub fn invert(self, response: f64) -> f64 {
        match self {
            ResponseTransform::Raw => response,
            ResponseTransform::Log10 => 10f64.powf(response),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResponseTransform::Raw => "raw",
            ResponseTransform::Log10 => "log10",
        }
    }
}

impl std::str::FromStr for ResponseTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(ResponseTransform::Raw),
            "log10" => Ok(ResponseTransform::Log10),
            other => Err(format!("unknown response transform `{other}` (raw|log10)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(num_trees: usize, mtry: usize, min_node_size: usize, seed: u64) -> Self {
        ForestParams {
            num_trees,
            mtry,
            min_node_size,
            seed,
        }
    }

    pub fn validate(&self, width: usize) -> Result<(), ForestError> {
        if self.num_trees == 0 {
            return Err(ForestError::InvalidParams("num_trees must be positive".into()));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::InvalidParams(
                "min_node_size must be positive".into(),
            ));
        }
        if self.mtry == 0 || self.mtry > width {
            return Err(ForestError::MtryOutOfRange {
                mtry: self.mtry,
                width,
            });
        }
        Ok(())
    }
}

/// Named predictor columns plus the response transform; identified by a fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub fingerprint: String,
    pub transform: ResponseTransform,
    pub columns: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<String>, transform: ResponseTransform) -> Self {
        let fingerprint = Self::fingerprint_of(&columns, transform);
        Schema {
            fingerprint,
            transform,
            columns,
        }
    }

    /// First 16 hex digits of SHA-256 over the transform name and column names.
    pub fn fingerprint_of(columns: &[String], transform: ResponseTransform) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"aiwc-schema v1\n");
        hasher.update(transform.name().as_bytes());
        for c in columns {
            hasher.update(b"\n");
            hasher.update(c.as_bytes());
        }
        hasher.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// Row-major predictor matrix with an already-transformed response.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    schema: Schema,
    values: Vec<f64>,
    response: Vec<f64>,
}

impl TrainingSet {
    pub fn new(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        response: Vec<f64>,
        transform: ResponseTransform,
    ) -> Result<Self, ForestError> {
        let width = columns.len();
        if rows.len() != response.len() {
            return Err(ForestError::InvalidParams(format!(
                "{} rows but {} responses",
                rows.len(),
                response.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(ForestError::RowWidth {
                    row: i,
                    expected: width,
                    found: row.len(),
                });
            }
            if !row.iter().all(|v| v.is_finite()) || !response[i].is_finite() {
                return Err(ForestError::NonFinite { row: i });
            }
            values.extend_from_slice(row);
        }
        Ok(TrainingSet {
            schema: Schema::new(columns, transform),
            values,
            response,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width() + col]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        let w = self.width();
        let mut values = Vec::with_capacity(indices.len() * w);
        let mut response = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            response.push(self.response[i]);
        }
        TrainingSet {
            schema: self.schema.clone(),
            values,
            response,
        }
    }

    pub(crate) fn check_fit(&self, params: &ForestParams) -> Result<(), ForestError> {
        if self.is_empty() {
            return Err(ForestError::Empty);
        }
        if self.len() < 2 {
            return Err(ForestError::TooFewRows(self.len()));
        }
        if self.len() > u32::MAX as usize {
            return Err(ForestError::InvalidParams("too many rows".into()));
        }
        params.validate(self.width())
    }
}
