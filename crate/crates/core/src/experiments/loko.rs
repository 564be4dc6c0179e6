use std::io::Write;

use rayon::prelude::*;

use super::{derive_seed, median, ExperimentError};
use crate::dataset::format_real;
use crate::dataset::{Dataset, KernelId};
use crate::forest::ResponseTransform;
use crate::tuner::{tune, ForestObjective, Schedule, SearchSpace, Triple};

/// Every omission is tuned from the same start with the same seeds, so rows
/// differ only through the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LokoConfig {
    pub space: SearchSpace,
    pub start: Triple,
    pub schedule: Schedule,
    pub transform: ResponseTransform,
    pub forest_seed: u64,
    pub sa_seed: u64,
}

impl LokoConfig {
    /// Start `(500, 32, 9)` (mtry capped at the width), `num_trees` in
    /// 10..=600, `min_node_size` pinned at 9, 6 evaluations per omission.
    pub fn desk(width: usize, seed: u64) -> Self {
        LokoConfig {
            space: SearchSpace {
                num_trees: (10, 600),
                mtry: (1, width),
                min_node_size: (9, 9),
            },
            start: Triple::new(500, 32.min(width), 9),
            schedule: Schedule::with_budget(6),
            transform: ResponseTransform::Log10,
            forest_seed: derive_seed(seed, &[1]),
            sa_seed: derive_seed(seed, &[2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LokoRow {
    pub kernel_omitted: KernelId,
    pub num_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub error_pct: f64,
}

/// Per-column medians of the LOKO optima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LokoMedians {
    pub num_trees: f64,
    pub mtry: f64,
    pub min_node_size: f64,
    pub error_pct: f64,
}

impl LokoMedians {
    /// The selected model: medians rounded to the nearest integer.
    pub fn params(&self) -> Triple {
        Triple::new(
            self.num_trees.round() as usize,
            self.mtry.round() as usize,
            self.min_node_size.round() as usize,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LokoReport {
    /// In kernel order.
    pub rows: Vec<LokoRow>,
    pub medians: LokoMedians,
}

/// Tunes on the dataset minus each kernel in turn and records the optimum.
pub fn loko(data: &Dataset, config: &LokoConfig) -> Result<LokoReport, ExperimentError> {
    let kernels = data.kernels();
    if kernels.len() < 2 {
        return Err(ExperimentError::Config(format!(
            "leave-one-kernel-out needs at least 2 kernels, found {}",
            kernels.len()
        )));
    }
    let rows = kernels
        .par_iter()
        .map(|k| {
            let rest = data.filter(|s| s.application != k.application || s.kernel != k.kernel);
            let train = rest.training_set(config.transform)?;
            let mut objective = ForestObjective::new(&train, config.forest_seed);
            let result = tune(
                |p| objective.error_pct(p),
                &config.space,
                config.start,
                &config.schedule,
                config.sa_seed,
            )?;
            Ok(LokoRow {
                kernel_omitted: k.clone(),
                num_trees: result.best.num_trees,
                mtry: result.best.mtry,
                min_node_size: result.best.min_node_size,
                error_pct: result.best_error,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let column = |f: fn(&LokoRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let medians = LokoMedians {
        num_trees: column(|r| r.num_trees as f64),
        mtry: column(|r| r.mtry as f64),
        min_node_size: column(|r| r.min_node_size as f64),
        error_pct: column(|r| r.error_pct),
    };
    Ok(LokoReport { rows, medians })
}

/// One row per omission followed by a `median` row.
pub fn write_loko_csv<W: Write>(w: W, report: &LokoReport) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "kernel_omitted",
        "num_trees",
        "mtry",
        "min_node_size",
        "error_pct",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.kernel_omitted.to_string(),
            r.num_trees.to_string(),
            r.mtry.to_string(),
            r.min_node_size.to_string(),
            format_real(r.error_pct),
        ])?;
    }
    let m = &report.medians;
    out.write_record([
        "median".to_string(),
        format_real(m.num_trees),
        format_real(m.mtry),
        format_real(m.min_node_size),
        format_real(m.error_pct),
    ])?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Size;
    use crate::dataset::{synthesize, SynthConfig};

    fn small(kernels: usize) -> Dataset {
        let cfg = SynthConfig {
            kernel_count: kernels,
            device_count: 3,
            sizes: vec![Size::Tiny, Size::Small, Size::Medium],
            ..SynthConfig::default()
        };
        synthesize(&cfg).unwrap().dataset().unwrap()
    }

    fn quick(width: usize) -> LokoConfig {
        let mut c = LokoConfig::desk(width, 4);
        c.space.num_trees = (10, 60);
        c.start = Triple::new(30, 5.min(width), 9);
        c.schedule = Schedule::with_budget(6);
        c
    }

    #[test]
    fn two_kernels_give_two_rows() {
        let data = small(2);
        let report = loko(&data, &quick(data.columns().len())).unwrap();
        assert_eq!(report.rows.len(), 2);
        let kernels = data.kernels();
        assert_eq!(report.rows[0].kernel_omitted, kernels[0]);
        assert_eq!(report.rows[1].kernel_omitted, kernels[1]);
    }

    #[test]
    fn medians_lie_within_column_ranges() {
        let data = small(5);
        let report = loko(&data, &quick(data.columns().len())).unwrap();
        let within = |m: f64, f: fn(&LokoRow) -> f64| {
            let v: Vec<f64> = report.rows.iter().map(f).collect();
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lo <= m && m <= hi
        };
        let m = report.medians;
        assert!(within(m.num_trees, |r| r.num_trees as f64));
        assert!(within(m.mtry, |r| r.mtry as f64));
        assert!(within(m.min_node_size, |r| r.min_node_size as f64));
        assert!(within(m.error_pct, |r| r.error_pct));
        assert!(report.rows.iter().all(|r| r.min_node_size == 9));
    }

    #[test]
    fn one_kernel_is_rejected() {
        let data = small(1);
        assert!(matches!(
            loko(&data, &quick(data.columns().len())),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn csv_ends_with_medians() {
        let data = small(2);
        let report = loko(&data, &quick(data.columns().len())).unwrap();
        let mut buf = Vec::new();
        write_loko_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "kernel_omitted,num_trees,mtry,min_node_size,error_pct");
        assert!(lines[3].starts_with("median,"));
    }
}
