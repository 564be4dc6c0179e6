//! Joined tables of kernel features and per-device runtimes.
//!
//! A feature row describes one kernel invocation `(application, kernel, size)`
//! and is shared by every device; runtime rows add the device and the measured
//! times. [`load`] joins the two on `(application, kernel, size)`.

mod csvio;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::characterizer::{FeatureVector, FEATURE_NAMES};
use crate::forest::{ForestError, ResponseTransform, TrainingSet};

pub use csvio::{
    format_real, load, load_dir, load_files, read_features_csv, read_iterations_csv, read_runtimes_csv,
    write_features_csv, write_iterations_csv, write_runtimes_csv, FeatureRow, LoadReport, FEATURES_FILE,
    FEATURE_KEY_COLUMNS, ITERATIONS_FILE, ITERATIONS_HEADER, LATENT_FILE, RUNTIMES_FILE, RUNTIMES_HEADER,
};
pub use synth::{synthesize, LatentModel, SynthConfig, SynthOutput, APPLICATIONS, DEVICES};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{file}: unexpected header; expected `{expected}`")]
    Header { file: String, expected: String },
    #[error("{file} line {line}: {reason}")]
    Record { file: String, line: u64, reason: String },
    #[error("duplicate key {0}")]
    Duplicate(String),
    #[error("the join produced no rows")]
    EmptyJoin,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Tiny,
    Small,
    Medium,
    Large,
}

impl Size {
    pub const ALL: [Size; 4] = [Size::Tiny, Size::Small, Size::Medium, Size::Large];

    pub fn name(self) -> &'static str {
        match self {
            Size::Tiny => "tiny",
            Size::Small => "small",
            Size::Medium => "medium",
            Size::Large => "large",
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Size::ALL
            .into_iter()
            .find(|z| z.name() == s)
            .ok_or_else(|| format!("unknown size `{s}` (tiny|small|medium|large)"))
    }
}

/// Kernel identity: kernel names are only unique within an application.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelId {
    pub application: String,
    pub kernel: String,
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.application, self.kernel)
    }
}

/// Measured times of one kernel invocation on one device.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRecord {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub device: String,
    /// Seconds per iteration; may be empty when only the mean was recorded.
    pub iteration_times: Vec<f64>,
    pub iterations: usize,
    pub mean_time: f64,
}

impl RuntimeRecord {
    /// Builds a record whose mean is computed from `times`.
    pub fn from_times(
        application: &str,
        kernel: &str,
        size: Size,
        device: &str,
        times: Vec<f64>,
    ) -> RuntimeRecord {
        RuntimeRecord {
            application: application.to_string(),
            kernel: kernel.to_string(),
            size,
            device: device.to_string(),
            iterations: times.len(),
            mean_time: mean(&times),
            iteration_times: times,
        }
    }
}

/// Arithmetic mean as `first + Σ(x − first) / n`, exact when all values agree.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// One joined observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub device: String,
    pub features: FeatureVector,
    pub mean_time: f64,
    pub iteration_times: Vec<f64>,
}

impl Sample {
    pub fn kernel_id(&self) -> KernelId {
        KernelId {
            application: self.application.clone(),
            kernel: self.kernel.clone(),
        }
    }

    fn sort_key(&self) -> (&str, Size, &str, &str) {
        (&self.kernel, self.size, &self.device, &self.application)
    }
}

/// Rows in canonical order: by kernel, size, device, then application.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Sample>,
    devices: Vec<String>,
}

impl Dataset {
    pub fn new(mut rows: Vec<Sample>) -> Result<Dataset, DatasetError> {
        for r in &rows {
            if r.kernel.is_empty() || r.application.is_empty() || r.device.is_empty() {
                return Err(DatasetError::Config(
                    "application, kernel and device must be non-empty".into(),
                ));
            }
            if !(r.mean_time > 0.0 && r.mean_time.is_finite()) {
                return Err(DatasetError::Config(format!(
                    "non-positive time for {}/{} {} on {}",
                    r.application, r.kernel, r.size, r.device
                )));
            }
        }
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        for w in rows.windows(2) {
            if w[0].sort_key() == w[1].sort_key() {
                let r = &w[0];
                return Err(DatasetError::Duplicate(format!(
                    "({}, {}, {}, {})",
                    r.application, r.kernel, r.size, r.device
                )));
            }
        }
        let devices: BTreeSet<String> = rows.iter().map(|r| r.device.clone()).collect();
        Ok(Dataset {
            rows,
            devices: devices.into_iter().collect(),
        })
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted device ids.
    pub fn devices(&self) -> &[String] {
        &self.devices
    }

    /// Distinct kernels, sorted.
    pub fn kernels(&self) -> Vec<KernelId> {
        let set: BTreeSet<KernelId> = self.rows.iter().map(Sample::kernel_id).collect();
        set.into_iter().collect()
    }

    /// Predictor column names: the feature schema, then one indicator per device.
    pub fn columns(&self) -> Vec<String> {
        predictor_columns(&self.devices)
    }

    /// The predictor encoding of `features` on `device` under this dataset's devices.
    pub fn predictor_row(&self, features: &FeatureVector, device: &str) -> Option<Vec<f64>> {
        predictor_row(&self.devices, features, device)
    }

    /// Keeps rows matching `keep`; the device list is preserved so predictor
    /// schemas stay aligned with the parent dataset.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Dataset {
        Dataset {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            devices: self.devices.clone(),
        }
    }

    /// Predictor matrix and transformed response, in row order.
    pub fn training_set(&self, transform: ResponseTransform) -> Result<TrainingSet, DatasetError> {
        let rows = self
            .rows
            .iter()
            .map(|r| predictor_row(&self.devices, &r.features, &r.device).expect("own device"))
            .collect();
        let y = self.rows.iter().map(|r| transform.apply(r.mean_time)).collect();
        Ok(TrainingSet::new(self.columns(), rows, y, transform)?)
    }

    /// Distinct feature rows, in canonical order.
    pub fn feature_rows(&self) -> Vec<FeatureRow> {
        let mut out: Vec<FeatureRow> = Vec::new();
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if seen.insert((r.application.clone(), r.kernel.clone(), r.size)) {
                out.push(FeatureRow {
                    application: r.application.clone(),
                    kernel: r.kernel.clone(),
                    size: r.size,
                    features: r.features,
                });
            }
        }
        out
    }

    pub fn runtime_records(&self) -> Vec<RuntimeRecord> {
        self.rows
            .iter()
            .map(|r| RuntimeRecord {
                application: r.application.clone(),
                kernel: r.kernel.clone(),
                size: r.size,
                device: r.device.clone(),
                iterations: r.iteration_times.len().max(1),
                iteration_times: r.iteration_times.clone(),
                mean_time: r.mean_time,
            })
            .collect()
    }
}

pub const DEVICE_PREFIX: &str = "device=";

pub fn predictor_columns(devices: &[String]) -> Vec<String> {
    FEATURE_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain(devices.iter().map(|d| format!("{DEVICE_PREFIX}{d}")))
        .collect()
}

/// Device ids encoded in a predictor schema, in column order.
pub fn devices_of(columns: &[String]) -> Vec<String> {
    columns
        .iter()
        .filter_map(|c| c.strip_prefix(DEVICE_PREFIX).map(str::to_string))
        .collect()
}

pub fn predictor_row(devices: &[String], features: &FeatureVector, device: &str) -> Option<Vec<f64>> {
    let hit = devices.iter().position(|d| d == device)?;
    let mut row = features.to_array().to_vec();
    row.extend((0..devices.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
    Some(row)
}
