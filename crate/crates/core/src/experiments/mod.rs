//! Evaluation procedures: parameter scans, leave-one-kernel-out tuning, the
//! learning curve, and hold-one-kernel-out prediction reports.
//!
//! Every procedure is a pure function of its inputs and seeds. Independent
//! fits run on the ambient rayon pool; results are always assembled in
//! canonical order, so the thread count never changes an output byte.

mod curve;
mod evaluate;
mod loko;
pub mod plot;
mod scans;

pub use curve::{learning_curve, write_learning_curve_csv, LearningCurvePoint};
pub use evaluate::{
    evaluate, write_cell_errors_csv, write_predictions_csv, write_rank_csv, CellError, Evaluation,
    PredictionRow, RankEntry, RankGroup, RankReport,
};
pub use loko::{loko, write_loko_csv, LokoConfig, LokoMedians, LokoReport, LokoRow};
pub use scans::{
    heatmap_scan, min_node_scan, write_heatmap_csv, write_min_node_csv, HeatmapCell, HeatmapConfig,
    HeatmapScan, MinNodeRow,
};

use crate::dataset::DatasetError;
use crate::forest::ForestError;
use crate::tuner::TuneError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tune(#[from] TuneError<ForestError>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Derives an independent 64-bit seed from `base` and a path of indices
/// (splitmix64 applied to each step), so that every fit, chain, or shuffle in
/// an experiment gets its own stream from one user-facing seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Linear-interpolation quantile (the usual "type 7" definition).
/// Returns NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}
