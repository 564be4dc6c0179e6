//! Simulated-annealing search over forest hyperparameters.
//!
//! [`tune`] is a generic integer annealer over the `(num_trees, mtry,
//! min_node_size)` box; [`tune_forest`] plugs in the out-of-bag error of a
//! forest as the objective.
//!
//! Each proposal perturbs one dimension, chosen uniformly among those with a
//! non-trivial range, by a step drawn uniformly from `±(T / T0) · range`,
//! rounded half away from zero and clamped to the space. A proposal equal to
//! the current point is redrawn up to five times and then taken as a null move
//! (logged and counted, but not re-evaluated). Worse points are accepted with
//! probability `exp(-Δ / T)`. The temperature is multiplied by the cooling
//! factor after every `steps_per_temperature` proposals, and the search ends
//! once it falls below the stop temperature or the evaluation budget is spent.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forest::{ForestError, ForestParams, OobPrefixCache, TrainingSet};

const MAX_REDRAWS: usize = 5;

/// A point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub num_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
}

impl Triple {
    pub const fn new(num_trees: usize, mtry: usize, min_node_size: usize) -> Self {
        Triple {
            num_trees,
            mtry,
            min_node_size,
        }
    }

    pub fn with_seed(self, seed: u64) -> ForestParams {
        ForestParams::new(self.num_trees, self.mtry, self.min_node_size, seed)
    }

    fn get(&self, dim: usize) -> usize {
        [self.num_trees, self.mtry, self.min_node_size][dim]
    }

    fn set(&mut self, dim: usize, v: usize) {
        match dim {
            0 => self.num_trees = v,
            1 => self.mtry = v,
            _ => self.min_node_size = v,
        }
    }
}

impl From<ForestParams> for Triple {
    fn from(p: ForestParams) -> Self {
        Triple::new(p.num_trees, p.mtry, p.min_node_size)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(num_trees={}, mtry={}, min_node_size={})",
            self.num_trees, self.mtry, self.min_node_size
        )
    }
}

pub const DIMENSIONS: [&str; 3] = ["num_trees", "mtry", "min_node_size"];

/// Inclusive integer bounds per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub num_trees: (usize, usize),
    pub mtry: (usize, usize),
    pub min_node_size: (usize, usize),
}

impl SearchSpace {
    /// num_trees in 10..=10000, mtry in 1..=width, min_node_size in 1..=50.
    pub fn for_width(width: usize) -> Self {
        SearchSpace {
            num_trees: (10, 10_000),
            mtry: (1, width.max(1)),
            min_node_size: (1, 50),
        }
    }

    fn bounds(&self, dim: usize) -> (usize, usize) {
        [self.num_trees, self.mtry, self.min_node_size][dim]
    }

    fn bounds_mut(&mut self, dim: usize) -> &mut (usize, usize) {
        match dim {
            0 => &mut self.num_trees,
            1 => &mut self.mtry,
            _ => &mut self.min_node_size,
        }
    }

    pub fn validate(&self) -> Result<(), TuneError<std::convert::Infallible>> {
        for (dim, name) in DIMENSIONS.iter().enumerate() {
            let (lo, hi) = self.bounds(dim);
            if lo > hi || lo == 0 {
                return Err(TuneError::InvalidSpace(format!(
                    "{name} bounds {lo}..={hi} must be positive and ordered"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Triple) -> bool {
        (0..3).all(|d| {
            let (lo, hi) = self.bounds(d);
            (lo..=hi).contains(&p.get(d))
        })
    }

    /// Collapses one dimension to a single value.
    pub fn fix(&mut self, dimension: &str, value: usize) -> Result<(), String> {
        let dim = DIMENSIONS
            .iter()
            .position(|d| *d == dimension)
            .ok_or_else(|| format!("unknown dimension `{dimension}`"))?;
        *self.bounds_mut(dim) = (value, value);
        Ok(())
    }

    /// Applies a `name=value` specification such as `min_node_size=9`.
    pub fn apply_fix(&mut self, spec: &str) -> Result<(), String> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got `{spec}`"))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("invalid value in `{spec}`"))?;
        self.fix(name.trim(), value)
    }

    fn corners(&self) -> [Triple; 4] {
        let (t, m) = (self.num_trees, self.mtry);
        let n = self.min_node_size.0;
        [
            Triple::new(t.0, m.0, n),
            Triple::new(t.0, m.1, n),
            Triple::new(t.1, m.0, n),
            Triple::new(t.1, m.1, n),
        ]
    }

    /// The 4 `(num_trees, mtry)` corners followed by `interior` uniformly drawn
    /// interior points, all at the lower `min_node_size` bound.
    pub fn multi_start(&self, interior: usize, seed: u64) -> Vec<Triple> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts = self.corners().to_vec();
        let inner = |(lo, hi): (usize, usize), rng: &mut ChaCha8Rng| {
            if hi - lo >= 2 {
                rng.gen_range(lo + 1..hi)
            } else {
                lo
            }
        };
        for _ in 0..interior {
            let t = inner(self.num_trees, &mut rng);
            let m = inner(self.mtry, &mut rng);
            starts.push(Triple::new(t, m, self.min_node_size.0));
        }
        starts
    }
}

/// Annealing schedule. Unset temperatures take their defaults relative to
/// the objective value at the start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Defaults to 10% of the start objective, floored at 1.
    pub initial_temperature: Option<f64>,
    pub cooling_factor: f64,
    pub steps_per_temperature: usize,
    /// Defaults to 1% of the initial temperature.
    pub stop_temperature: Option<f64>,
    pub max_evaluations: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            initial_temperature: None,
            cooling_factor: 0.85,
            steps_per_temperature: 10,
            stop_temperature: None,
            max_evaluations: 1000,
        }
    }
}

impl Schedule {
    pub fn with_budget(max_evaluations: usize) -> Self {
        Schedule {
            max_evaluations,
            ..Schedule::default()
        }
    }

    fn temperatures(&self, start_value: f64) -> Result<(f64, f64), String> {
        let t0 = self
            .initial_temperature
            .unwrap_or_else(|| (0.1 * start_value.abs()).max(1.0));
        let stop = self.stop_temperature.unwrap_or(0.01 * t0);
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(format!("initial temperature {t0} must be positive"));
        }
        if !(stop > 0.0 && stop < t0) {
            return Err(format!(
                "stop temperature {stop} must lie in (0, initial temperature {t0})"
            ));
        }
        Ok((t0, stop))
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(format!("cooling factor {} not in (0, 1)", self.cooling_factor));
        }
        if self.steps_per_temperature == 0 || self.max_evaluations == 0 {
            return Err("steps per temperature and max evaluations must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub params: Triple,
    pub error_pct: f64,
    pub accepted: bool,
    pub temperature: f64,
}

/// Chronological log of every evaluated proposal; entry 0 is the start point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TuneTrace {
    pub entries: Vec<TraceEntry>,
}

pub const TRACE_HEADER: [&str; 7] = [
    "eval",
    "num_trees",
    "mtry",
    "min_node_size",
    "error_pct",
    "accepted",
    "temperature",
];

impl TuneTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lowest-error entry; the earliest wins ties.
    pub fn best(&self) -> Option<&TraceEntry> {
        self.entries
            .iter()
            .reduce(|a, b| if b.error_pct < a.error_pct { b } else { a })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for (i, e) in self.entries.iter().enumerate() {
            out.write_record([
                i.to_string(),
                e.params.num_trees.to_string(),
                e.params.mtry.to_string(),
                e.params.min_node_size.to_string(),
                e.error_pct.to_string(),
                e.accepted.to_string(),
                e.temperature.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TuneTrace, String> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().ne(TRACE_HEADER) {
            return Err(format!("unexpected trace header: {header:?}"));
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let bad = |what: &str| format!("trace row {}: bad {what}", i + 1);
            let int = |k: usize| field(k).parse::<usize>().map_err(|_| bad(TRACE_HEADER[k]));
            let real = |k: usize| field(k).parse::<f64>().map_err(|_| bad(TRACE_HEADER[k]));
            entries.push(TraceEntry {
                params: Triple::new(int(1)?, int(2)?, int(3)?),
                error_pct: real(4)?,
                accepted: field(5).parse().map_err(|_| bad("accepted"))?,
                temperature: real(6)?,
            });
        }
        Ok(TuneTrace { entries })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(std::io::Error::other)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TuneError<E> {
    #[error("start point {0} lies outside the search space")]
    StartOutsideSpace(Triple),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("objective failed at {params}: {source}")]
    Objective { params: Triple, source: E },
}

impl<E> TuneError<E> {
    fn widen(e: TuneError<std::convert::Infallible>) -> Self {
        match e {
            TuneError::StartOutsideSpace(p) => TuneError::StartOutsideSpace(p),
            TuneError::InvalidSpace(s) => TuneError::InvalidSpace(s),
            TuneError::InvalidSchedule(s) => TuneError::InvalidSchedule(s),
            TuneError::Objective { source, .. } => match source {},
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: Triple,
    pub best_error: f64,
    pub trace: TuneTrace,
}

/// Anneals `objective` over `space` from `start`. Deterministic in `seed`.
pub fn tune<E, F>(
    mut objective: F,
    space: &SearchSpace,
    start: Triple,
    schedule: &Schedule,
    seed: u64,
) -> Result<TuneResult, TuneError<E>>
where
    F: FnMut(Triple) -> Result<f64, E>,
{
    space.validate().map_err(TuneError::widen)?;
    schedule.validate().map_err(TuneError::InvalidSchedule)?;
    if !space.contains(&start) {
        return Err(TuneError::StartOutsideSpace(start));
    }
    let mut eval = |p: Triple| objective(p).map_err(|source| TuneError::Objective { params: p, source });

    let mut current = start;
    let mut current_value = eval(start)?;
    let (t0, stop) = schedule
        .temperatures(current_value)
        .map_err(TuneError::InvalidSchedule)?;
    let mut trace = TuneTrace::default();
    trace.entries.push(TraceEntry {
        params: start,
        error_pct: current_value,
        accepted: true,
        temperature: t0,
    });
    let (mut best, mut best_value) = (current, current_value);

    let movable: Vec<usize> = (0..3)
        .filter(|&d| space.bounds(d).0 < space.bounds(d).1)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut temperature = t0;
    let mut at_level = 0;
    while !movable.is_empty() && trace.len() < schedule.max_evaluations && temperature >= stop {
        let scale = temperature / t0;
        let mut candidate = current;
        for _ in 0..=MAX_REDRAWS {
            let dim = movable[rng.gen_range(0..movable.len())];
            let (lo, hi) = space.bounds(dim);
            let reach = scale * (hi - lo) as f64;
            let step = (rng.gen_range(-1.0..=1.0) * reach).round() as i64;
            let moved = (current.get(dim) as i64 + step).clamp(lo as i64, hi as i64);
            candidate = current;
            candidate.set(dim, moved as usize);
            if candidate != current {
                break;
            }
        }

        let (value, accepted) = if candidate == current {
            (current_value, true)
        } else {
            let value = eval(candidate)?;
            let delta = value - current_value;
            let accepted = delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp();
            (value, accepted)
        };
        trace.entries.push(TraceEntry {
            params: candidate,
            error_pct: value,
            accepted,
            temperature,
        });
        if accepted {
            current = candidate;
            current_value = value;
        }
        if value < best_value {
            best = candidate;
            best_value = value;
        }

        at_level += 1;
        if at_level == schedule.steps_per_temperature {
            at_level = 0;
            temperature *= schedule.cooling_factor;
        }
    }
    Ok(TuneResult {
        best,
        best_error: best_value,
        trace,
    })
}

/// Objective for [`tune`]: OOB error% of a forest fit with a fixed seed.
///
/// Values are memoized, and forests sharing `(mtry, min_node_size)` reuse
/// each other's trees, so revisiting or growing a forest is cheap.
pub struct ForestObjective<'a> {
    cache: OobPrefixCache<'a>,
    forest_seed: u64,
    memo: HashMap<Triple, f64>,
}

impl<'a> ForestObjective<'a> {
    pub fn new(data: &'a TrainingSet, forest_seed: u64) -> Self {
        ForestObjective {
            cache: OobPrefixCache::new(data),
            forest_seed,
            memo: HashMap::new(),
        }
    }

    pub fn error_pct(&mut self, p: Triple) -> Result<f64, ForestError> {
        if let Some(&v) = self.memo.get(&p) {
            return Ok(v);
        }
        let v = self.cache.oob_stats(&p.with_seed(self.forest_seed))?.error_pct;
        self.memo.insert(p, v);
        Ok(v)
    }
}

/// Tunes a forest on `data`, minimizing OOB error%. The trace is also written
/// to `trace_path` when given.
pub fn tune_forest(
    data: &TrainingSet,
    space: &SearchSpace,
    start: Triple,
    schedule: &Schedule,
    forest_seed: u64,
    sa_seed: u64,
    trace_path: Option<&Path>,
) -> Result<TuneResult, TuneForestError> {
    let mut objective = ForestObjective::new(data, forest_seed);
    let result = tune(|p| objective.error_pct(p), space, start, schedule, sa_seed)?;
    if let Some(path) = trace_path {
        result.trace.save(path)?;
    }
    Ok(result)
}

#[derive(Debug, thiserror::Error)]
pub enum TuneForestError {
    #[error(transparent)]
    Tune(#[from] TuneError<ForestError>),
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
}
