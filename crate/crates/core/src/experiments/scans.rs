use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::{derive_seed, ExperimentError};
use crate::dataset::format_real;
use crate::forest::{ForestError, ForestParams, OobPrefixCache, TrainingSet};
use crate::tuner::{tune, ForestObjective, Schedule, SearchSpace, Triple, TuneError, TuneResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinNodeRow {
    pub min_node_size: usize,
    pub error_pct: f64,
}

/// OOB error% for each `min_node_size` in `range`, with everything else fixed.
pub fn min_node_scan(
    data: &TrainingSet,
    num_trees: usize,
    mtry: usize,
    range: RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<MinNodeRow>, ForestError> {
    range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|min_node_size| {
            let params = ForestParams::new(num_trees, mtry, min_node_size, seed);
            let stats = OobPrefixCache::new(data).oob_stats(&params)?;
            Ok(MinNodeRow {
                min_node_size,
                error_pct: stats.error_pct,
            })
        })
        .collect()
}

pub fn write_min_node_csv<W: Write>(w: W, rows: &[MinNodeRow]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["min_node_size", "error_pct"])?;
    for r in rows {
        out.write_record([r.min_node_size.to_string(), format_real(r.error_pct)])?;
    }
    out.flush()?;
    Ok(())
}

/// Multi-start annealing over `(num_trees, mtry)` with `min_node_size` pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapConfig {
    pub space: SearchSpace,
    /// Random interior starts, in addition to the four corners.
    pub interior_starts: usize,
    pub schedule: Schedule,
    pub forest_seed: u64,
    pub sa_seed: u64,
}

impl HeatmapConfig {
    /// `num_trees` in 1..=1000, `mtry` over the full width, `min_node_size` 9,
    /// 8 interior starts, 200 evaluations per chain.
    pub fn desk(width: usize, seed: u64) -> Self {
        HeatmapConfig {
            space: SearchSpace {
                num_trees: (1, 1000),
                mtry: (1, width),
                min_node_size: (9, 9),
            },
            interior_starts: 8,
            schedule: Schedule::with_budget(200),
            forest_seed: derive_seed(seed, &[1]),
            sa_seed: derive_seed(seed, &[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapCell {
    pub num_trees: usize,
    pub mtry: usize,
    /// Mean over every visit of the cell.
    pub error_pct: f64,
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapScan {
    pub starts: Vec<Triple>,
    pub chains: Vec<TuneResult>,
    /// Sorted by `(num_trees, mtry)`.
    pub cells: Vec<HeatmapCell>,
}

impl HeatmapScan {
    pub fn cell(&self, num_trees: usize, mtry: usize) -> Option<&HeatmapCell> {
        self.cells
            .binary_search_by_key(&(num_trees, mtry), |c| (c.num_trees, c.mtry))
            .ok()
            .map(|i| &self.cells[i])
    }
}

pub fn heatmap_scan(data: &TrainingSet, config: &HeatmapConfig) -> Result<HeatmapScan, ExperimentError> {
    let (lo, hi) = config.space.min_node_size;
    if lo != hi {
        return Err(ExperimentError::Config(format!(
            "heatmap needs a fixed min_node_size, got {lo}..={hi}"
        )));
    }
    config
        .space
        .validate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let starts = config
        .space
        .multi_start(config.interior_starts, derive_seed(config.sa_seed, &[0]));
    let chain_seed = |i: usize| derive_seed(config.sa_seed, &[1, i as u64]);

    // Objective values do not depend on which cache produced them, so one
    // shared cache (sequential) and one cache per chain (parallel) agree.
    let chains: Vec<TuneResult> = if rayon::current_num_threads() == 1 {
        let mut objective = ForestObjective::new(data, config.forest_seed);
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                tune(
                    |p| objective.error_pct(p),
                    &config.space,
                    s,
                    &config.schedule,
                    chain_seed(i),
                )
            })
            .collect::<Result<_, TuneError<ForestError>>>()?
    } else {
        starts
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut objective = ForestObjective::new(data, config.forest_seed);
                tune(
                    |p| objective.error_pct(p),
                    &config.space,
                    s,
                    &config.schedule,
                    chain_seed(i),
                )
            })
            .collect::<Result<_, TuneError<ForestError>>>()?
    };

    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for entry in chains.iter().flat_map(|c| &c.trace.entries) {
        let slot = sums
            .entry((entry.params.num_trees, entry.params.mtry))
            .or_default();
        slot.0 += entry.error_pct;
        slot.1 += 1;
    }
    let cells = sums
        .into_iter()
        .map(|((num_trees, mtry), (sum, visits))| HeatmapCell {
            num_trees,
            mtry,
            error_pct: sum / visits as f64,
            visits,
        })
        .collect();
    Ok(HeatmapScan {
        starts,
        chains,
        cells,
    })
}

pub fn write_heatmap_csv<W: Write>(w: W, cells: &[HeatmapCell]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["num_trees", "mtry", "error_pct", "visits"])?;
    for c in cells {
        out.write_record([
            c.num_trees.to_string(),
            c.mtry.to_string(),
            format_real(c.error_pct),
            c.visits.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ResponseTransform;

    fn toy(n: usize) -> TrainingSet {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64, (i % 7) as f64, (i % 3) as f64])
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { 1.0 } else { 5.0 } + 0.1 * (i % 5) as f64)
            .collect();
        let cols = ["a", "b", "c"].map(String::from).to_vec();
        TrainingSet::new(cols, rows, y, ResponseTransform::Raw).unwrap()
    }

    #[test]
    fn min_node_scan_has_one_row_per_value_in_order() {
        let data = toy(120);
        let rows = min_node_scan(&data, 20, 2, 1..=50, 3).unwrap();
        assert_eq!(rows.len(), 50);
        assert!(rows.iter().enumerate().all(|(i, r)| r.min_node_size == i + 1));
    }

    #[test]
    fn min_node_as_large_as_the_data_is_the_mean_predictor() {
        let data = toy(300);
        let rows = min_node_scan(&data, 100, 3, 300..=300, 3).unwrap();
        assert!((rows[0].error_pct - 100.0).abs() < 15.0, "{}", rows[0].error_pct);
    }

    #[test]
    fn heatmap_cells_average_duplicates() {
        let data = toy(80);
        let mut config = HeatmapConfig::desk(3, 5);
        config.space.num_trees = (1, 30);
        config.schedule = Schedule::with_budget(15);
        let scan = heatmap_scan(&data, &config).unwrap();
        assert_eq!(scan.chains.len(), 12);
        let total: usize = scan.chains.iter().map(|c| c.trace.len()).sum();
        assert!(total <= 12 * 15);
        assert_eq!(scan.cells.iter().map(|c| c.visits).sum::<usize>(), total);
        for c in &scan.cells {
            let visits: Vec<f64> = scan
                .chains
                .iter()
                .flat_map(|ch| &ch.trace.entries)
                .filter(|e| (e.params.num_trees, e.params.mtry) == (c.num_trees, c.mtry))
                .map(|e| e.error_pct)
                .collect();
            assert_eq!(visits.len(), c.visits);
            let mean = visits.iter().sum::<f64>() / visits.len() as f64;
            assert!((mean - c.error_pct).abs() < 1e-9);
        }
        assert!(scan.cell(1, 1).is_some(), "corner start is always visited");
    }

    #[test]
    fn heatmap_rejects_free_min_node_size() {
        let data = toy(40);
        let mut config = HeatmapConfig::desk(3, 5);
        config.space.min_node_size = (1, 5);
        assert!(matches!(
            heatmap_scan(&data, &config),
            Err(ExperimentError::Config(_))
        ));
    }
}
