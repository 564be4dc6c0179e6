use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::ExperimentError;
use crate::dataset::format_real;
use crate::dataset::{Dataset, Size};
use crate::forest::{Forest, ForestError, ForestParams, ResponseTransform};

/// A held-out prediction, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub device: String,
    pub measured: f64,
    pub predicted: f64,
}

/// Error of one (kernel, size, device) cell as a percentage of the measured time.
#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub device: String,
    pub mean_measured: f64,
    pub mean_predicted: f64,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub device: String,
    pub mean_measured: f64,
    pub mean_predicted: f64,
}

/// Devices for one kernel invocation, fastest predicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGroup {
    pub application: String,
    pub kernel: String,
    pub size: Size,
    pub entries: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub groups: Vec<RankGroup>,
    /// Device pairs whose predicted order matches the measured order.
    pub concordant: usize,
    pub pairs: usize,
}

impl RankReport {
    /// Fraction of concordant pairs; 1 when there are no pairs to order.
    pub fn accuracy(&self) -> f64 {
        if self.pairs == 0 {
            1.0
        } else {
            self.concordant as f64 / self.pairs as f64
        }
    }
}

/// Two devices agree when the predicted and measured differences have the
/// same sign (ties count as a sign of their own), so the test does not depend
/// on the order the pair is taken in.
fn concordant(a: &RankEntry, b: &RankEntry) -> bool {
    let sign = |x: f64| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    sign(a.mean_predicted - b.mean_predicted) == sign(a.mean_measured - b.mean_measured)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// In dataset order.
    pub predictions: Vec<PredictionRow>,
    /// Sorted by kernel, size, device.
    pub cells: Vec<CellError>,
    pub rank: RankReport,
}

impl Evaluation {
    /// Builds the cell errors and ranking from any set of predictions.
    pub fn from_predictions(predictions: Vec<PredictionRow>) -> Evaluation {
        type Key = (String, Size, String, String);
        let mut sums: BTreeMap<Key, (f64, f64, usize)> = BTreeMap::new();
        for p in &predictions {
            let key = (p.kernel.clone(), p.size, p.device.clone(), p.application.clone());
            let slot = sums.entry(key).or_default();
            slot.0 += p.measured;
            slot.1 += p.predicted;
            slot.2 += 1;
        }
        let cells: Vec<CellError> = sums
            .into_iter()
            .map(|((kernel, size, device, application), (m, p, n))| {
                let (mean_measured, mean_predicted) = (m / n as f64, p / n as f64);
                CellError {
                    application,
                    kernel,
                    size,
                    device,
                    mean_measured,
                    mean_predicted,
                    error_pct: 100.0 * (mean_predicted - mean_measured).abs() / mean_measured,
                }
            })
            .collect();

        let mut grouped: BTreeMap<(String, Size, String), Vec<RankEntry>> = BTreeMap::new();
        for c in &cells {
            grouped
                .entry((c.kernel.clone(), c.size, c.application.clone()))
                .or_default()
                .push(RankEntry {
                    device: c.device.clone(),
                    mean_measured: c.mean_measured,
                    mean_predicted: c.mean_predicted,
                });
        }
        let (mut pairs, mut agree) = (0, 0);
        let groups = grouped
            .into_iter()
            .map(|((kernel, size, application), mut entries)| {
                for (i, a) in entries.iter().enumerate() {
                    for b in &entries[i + 1..] {
                        pairs += 1;
                        agree += usize::from(concordant(a, b));
                    }
                }
                entries.sort_by(|a, b| {
                    a.mean_predicted
                        .total_cmp(&b.mean_predicted)
                        .then_with(|| a.device.cmp(&b.device))
                });
                RankGroup {
                    application,
                    kernel,
                    size,
                    entries,
                }
            })
            .collect();
        Evaluation {
            predictions,
            cells,
            rank: RankReport {
                groups,
                concordant: agree,
                pairs,
            },
        }
    }

    pub fn mean_error_pct(&self) -> f64 {
        self.cells.iter().map(|c| c.error_pct).sum::<f64>() / self.cells.len().max(1) as f64
    }
}

/// Hold-one-kernel-out: each kernel's rows are predicted by a forest fitted on
/// all other kernels. Every fit uses `params` unchanged, seed included.
pub fn evaluate(
    data: &Dataset,
    params: &ForestParams,
    transform: ResponseTransform,
) -> Result<Evaluation, ExperimentError> {
    if data.devices().len() < 2 {
        return Err(ExperimentError::Config("ranking needs at least 2 devices".into()));
    }
    let kernels = data.kernels();
    if kernels.len() < 2 {
        return Err(ExperimentError::Config(
            "hold-one-kernel-out needs at least 2 kernels".into(),
        ));
    }
    let full = data.training_set(transform)?;
    let held_out: Vec<Vec<(usize, f64)>> = kernels
        .par_iter()
        .map(|k| {
            let is_k = |i: &usize| {
                let s = &data.rows()[*i];
                s.application == k.application && s.kernel == k.kernel
            };
            let train: Vec<usize> = (0..data.len()).filter(|i| !is_k(i)).collect();
            let forest = Forest::fit(&full.subset(&train), params)?;
            (0..data.len())
                .filter(is_k)
                .map(|i| Ok((i, forest.predict(full.row(i))?)))
                .collect::<Result<Vec<_>, ForestError>>()
        })
        .collect::<Result<_, ForestError>>()?;

    let mut predicted = vec![f64::NAN; data.len()];
    for (i, p) in held_out.into_iter().flatten() {
        predicted[i] = p;
    }
    let predictions = data
        .rows()
        .iter()
        .zip(predicted)
        .map(|(s, predicted)| PredictionRow {
            application: s.application.clone(),
            kernel: s.kernel.clone(),
            size: s.size,
            device: s.device.clone(),
            measured: s.mean_time,
            predicted,
        })
        .collect();
    Ok(Evaluation::from_predictions(predictions))
}

pub fn write_predictions_csv<W: Write>(w: W, rows: &[PredictionRow]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "application",
        "kernel",
        "size",
        "device",
        "measured_s",
        "predicted_s",
    ])?;
    for r in rows {
        out.write_record([
            r.application.as_str(),
            &r.kernel,
            r.size.name(),
            &r.device,
            &format_real(r.measured),
            &format_real(r.predicted),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cell_errors_csv<W: Write>(w: W, cells: &[CellError]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "application",
        "kernel",
        "size",
        "device",
        "mean_measured_s",
        "mean_predicted_s",
        "error_pct",
    ])?;
    for c in cells {
        out.write_record([
            c.application.as_str(),
            &c.kernel,
            c.size.name(),
            &c.device,
            &format_real(c.mean_measured),
            &format_real(c.mean_predicted),
            &format_real(c.error_pct),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One line per (kernel, size, device), `rank` 1 being the fastest predicted.
pub fn write_rank_csv<W: Write>(w: W, report: &RankReport) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "application",
        "kernel",
        "size",
        "rank",
        "device",
        "mean_measured_s",
        "mean_predicted_s",
    ])?;
    for g in &report.groups {
        for (i, e) in g.entries.iter().enumerate() {
            out.write_record([
                g.application.as_str(),
                &g.kernel,
                g.size.name(),
                &(i + 1).to_string(),
                &e.device,
                &format_real(e.mean_measured),
                &format_real(e.mean_predicted),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
