use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Prepared};
use super::{ForestError, ForestParams, TrainingSet};

/// Out-of-bag accuracy over the rows left out by at least one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobStats {
    pub error_pct: f64,
    pub r_squared: f64,
    pub mse: f64,
    pub mae: f64,
    /// Population variance of the response over the evaluated rows.
    pub variance: f64,
    pub rows_evaluated: usize,
}

/// Per-row running sums of out-of-bag predictions.
pub(crate) struct OobAccumulator {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl OobAccumulator {
    pub fn new(n: usize) -> Self {
        OobAccumulator {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn add(&mut self, row: usize, prediction: f64) {
        self.sum[row] += prediction;
        self.count[row] += 1;
    }

    pub fn finish(&self, response: &[f64]) -> Result<OobStats, ForestError> {
        let evaluated: Vec<usize> = (0..response.len()).filter(|&r| self.count[r] > 0).collect();
        if evaluated.is_empty() {
            return Err(ForestError::NoOobRows);
        }
        let n = evaluated.len() as f64;
        let mean = evaluated.iter().map(|&r| response[r]).sum::<f64>() / n;
        let variance = evaluated
            .iter()
            .map(|&r| (response[r] - mean).powi(2))
            .sum::<f64>()
            / n;
        if !(variance > 0.0) {
            return Err(ForestError::DegenerateResponse);
        }
        let (mut se, mut ae) = (0.0, 0.0);
        for &r in &evaluated {
            let err = self.sum[r] / self.count[r] as f64 - response[r];
            se += err * err;
            ae += err.abs();
        }
        let mse = se / n;
        let ratio = mse / variance;
        Ok(OobStats {
            error_pct: 100.0 * ratio,
            r_squared: 1.0 - ratio,
            mse,
            mae: ae / n,
            variance,
            rows_evaluated: evaluated.len(),
        })
    }
}

/// Out-of-bag predictions of one tree, rows ascending.
struct TreeOob {
    rows: Vec<u32>,
    values: Vec<f64>,
}

fn tree_oob(prep: &Prepared<'_>, params: &ForestParams, index: usize) -> TreeOob {
    let (tree, inbag) = grow(prep, params, index);
    let data = prep.data;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut next = inbag.iter().peekable();
    for r in 0..data.len() as u32 {
        let mut drawn = false;
        while next.peek().is_some_and(|&&d| d <= r) {
            drawn |= *next.next().expect("peeked") == r;
        }
        if !drawn {
            rows.push(r);
            values.push(tree.predict(data.row(r as usize)));
        }
    }
    TreeOob { rows, values }
}

/// Memoizes per-tree out-of-bag predictions so that the OOB error of a forest
/// with `n` trees reuses the first trees of any previously evaluated forest
/// with the same `(mtry, min_node_size, seed)`.
///
/// Results are bit-identical to fitting the full forest.
pub struct OobPrefixCache<'a> {
    prep: Prepared<'a>,
    chains: HashMap<(usize, usize, u64), Vec<TreeOob>>,
}

impl<'a> OobPrefixCache<'a> {
    pub fn new(data: &'a TrainingSet) -> Self {
        OobPrefixCache {
            prep: Prepared::new(data),
            chains: HashMap::new(),
        }
    }

    pub fn data(&self) -> &'a TrainingSet {
        self.prep.data
    }

    pub fn oob_stats(&mut self, params: &ForestParams) -> Result<OobStats, ForestError> {
        let data = self.prep.data;
        data.check_fit(params)?;
        let key = (params.mtry, params.min_node_size, params.seed);
        let prep = &self.prep;
        let chain = self.chains.entry(key).or_default();
        if chain.len() < params.num_trees {
            let fresh: Vec<TreeOob> = (chain.len()..params.num_trees)
                .into_par_iter()
                .map(|i| tree_oob(prep, params, i))
                .collect();
            chain.extend(fresh);
        }
        let mut acc = OobAccumulator::new(data.len());
        for t in &chain[..params.num_trees] {
            for (&r, &v) in t.rows.iter().zip(&t.values) {
                acc.add(r as usize, v);
            }
        }
        acc.finish(data.response())
    }
}
