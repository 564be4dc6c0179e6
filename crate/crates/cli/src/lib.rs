//! `aiwc-predict`: characterize kernels, train and tune runtime models,
//! predict and rank devices, and run the evaluation experiments.
//!
//! All randomness derives from the global `--seed` (fallback
//! `AIWC_PREDICT_SEED`, default 2018):
//!
//! | consumer                              | seed                      |
//! |---------------------------------------|---------------------------|
//! | forest fits (train, tune, scans, evaluate) | `derive_seed(seed, [1])` |
//! | annealing chains (tune, heatmap, loko) | `derive_seed(seed, [2])` (then per chain) |
//! | learning-curve shuffles and fits      | `seed`, fanned out internally |
//! | synthetic dataset                     | `seed`                    |

mod characterize;
mod error;
mod experiment;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use aiwc::characterizer::DEFAULT_HISTORY_LENGTH;
use aiwc::dataset::{
    devices_of, format_real, load_dir, load_files, predictor_columns, predictor_row, read_features_csv,
    Dataset, FeatureRow, Size,
};
use aiwc::experiments::derive_seed;
use aiwc::forest::{Forest, ResponseTransform};
use aiwc::microkernel::DEFAULT_FUEL;
use aiwc::tuner::{tune_forest, Schedule, SearchSpace, Triple};

pub use characterize::{embed_line, with_embedded, EMBED_PREFIX};
pub use error::CliError;
pub use experiment::ExperimentCommand;

pub const DEFAULT_SEED: u64 = 2018;

#[derive(Debug, Parser)]
#[command(
    name = "aiwc-predict",
    version,
    about = "Architecture-independent kernel characterization and runtime prediction"
)]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, env = "AIWC_PREDICT_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads for parallel fits (default: all cores). Output does not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(usize))]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a kernel (or read a saved trace) and emit its feature row as CSV.
    Characterize(CharacterizeArgs),
    /// Fit a forest with explicit parameters and save it.
    Train(TrainArgs),
    /// Anneal forest parameters to minimize out-of-bag error.
    Tune(TuneArgs),
    /// Predict the execution time of one feature row on one device.
    Predict(PredictArgs),
    /// List every device of a model, fastest predicted first.
    Rank(RankArgs),
    /// Evaluation experiments and dataset synthesis.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Kernel source file.
    #[arg(required_unless_present = "trace", conflicts_with = "trace")]
    pub kernel: Option<PathBuf>,

    /// Characterize a saved trace instead of running a kernel.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Global work size, X[,Y[,Z]].
    #[arg(long, value_parser = parse_dims, default_value = "1")]
    pub global: [u64; 3],

    /// Work-group size, X[,Y[,Z]] (default: one group spanning the global size).
    #[arg(long, value_parser = parse_dims)]
    pub local: Option<[u64; 3]>,

    /// Kernel argument NAME=VALUE (repeatable).
    #[arg(long = "arg", value_parser = parse_kernel_arg)]
    pub args: Vec<(String, i64)>,

    /// Branch history length for the entropy metrics.
    #[arg(long, default_value_t = DEFAULT_HISTORY_LENGTH)]
    pub history: u32,

    /// Instruction budget per work-item.
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    pub fuel: u64,

    /// Application column of the emitted row.
    #[arg(long, default_value = "custom")]
    pub application: String,

    /// Kernel column of the emitted row (default: the kernel's name or the trace file stem).
    #[arg(long)]
    pub name: Option<String>,

    /// Size column of the emitted row.
    #[arg(long, default_value = "tiny")]
    pub size: Size,

    /// Append the row to this CSV file (the header is written only to a new file).
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    /// Rewrite the kernel file with a `# aiwc: v1 <json>` metrics line at the top.
    #[arg(long)]
    pub embed: bool,

    /// Also save the execution trace to this file.
    #[arg(long)]
    pub save_trace: Option<PathBuf>,
}

/// Where training data comes from: a directory with the standard file names,
/// or explicit files.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding features.csv, runtimes.csv and optionally iterations.csv.
    #[arg(long, required_unless_present_all = ["features", "runtimes"], conflicts_with_all = ["features", "runtimes", "iterations"])]
    pub data: Option<PathBuf>,

    /// Feature CSV.
    #[arg(long, requires = "runtimes")]
    pub features: Option<PathBuf>,

    /// Runtime summary CSV.
    #[arg(long, requires = "features")]
    pub runtimes: Option<PathBuf>,

    /// Per-iteration runtime CSV.
    #[arg(long, requires = "runtimes")]
    pub iterations: Option<PathBuf>,
}

impl DataArgs {
    pub fn load(&self) -> Result<Dataset, CliError> {
        let (data, report) = match (&self.data, &self.features, &self.runtimes) {
            (Some(dir), _, _) => load_dir(dir).map_err(|e| CliError::from(e).context(dir.display()))?,
            (None, Some(f), Some(r)) => load_files(f, r, self.iterations.as_deref())?,
            _ => return Err(CliError::input("give --data or both --features and --runtimes")),
        };
        eprint!("{report}");
        Ok(data)
    }
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 505)]
    pub num_trees: usize,
    #[arg(long, default_value_t = 30)]
    pub mtry: usize,
    #[arg(long, default_value_t = 9)]
    pub min_node_size: usize,
    /// Response the forest regresses on.
    #[arg(long, default_value = "log10")]
    pub response: ResponseTransform,
}

impl ForestArgs {
    pub fn triple(&self) -> Triple {
        Triple::new(self.num_trees, self.mtry, self.min_node_size)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Output model file.
    #[arg(long, short)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Evaluation budget.
    #[arg(long, default_value_t = 1000)]
    pub max_evals: usize,
    /// Temperature multiplier per level, in (0, 1).
    #[arg(long, default_value_t = 0.85)]
    pub cooling: f64,
    /// Proposals per temperature level.
    #[arg(long, default_value_t = 10)]
    pub steps_per_temp: usize,
    /// Initial temperature (default: 10% of the start error, at least 1).
    #[arg(long)]
    pub initial_temp: Option<f64>,
    /// Stop temperature (default: 1% of the initial temperature).
    #[arg(long)]
    pub stop_temp: Option<f64>,
}

impl ScheduleArgs {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            initial_temperature: self.initial_temp,
            cooling_factor: self.cooling,
            steps_per_temperature: self.steps_per_temp,
            stop_temperature: self.stop_temp,
            max_evaluations: self.max_evals,
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Start point NUM_TREES,MTRY,MIN_NODE_SIZE (default: 500, min(32, width), 9).
    #[arg(long, value_parser = parse_triple)]
    pub start: Option<Triple>,
    /// Pin a dimension, e.g. `min_node_size=9` (repeatable).
    #[arg(long)]
    pub fix: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub min_trees: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_trees: usize,
    #[arg(long, default_value_t = 50)]
    pub max_min_node_size: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value = "log10")]
    pub response: ResponseTransform,
    /// Write the annealing trace CSV here.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Refit at the best parameters and save the model here.
    #[arg(long, short)]
    pub model: Option<PathBuf>,
}

/// Picks one row of a feature CSV.
#[derive(Debug, Args)]
pub struct RowArgs {
    /// Feature CSV (as written by `characterize`).
    #[arg(long)]
    pub features: PathBuf,
    /// Select rows of this application.
    #[arg(long)]
    pub application: Option<String>,
    /// Select rows of this kernel.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Select rows of this size.
    #[arg(long)]
    pub size: Option<Size>,
}

impl RowArgs {
    fn select(&self) -> Result<FeatureRow, CliError> {
        let file =
            File::open(&self.features).map_err(|e| CliError::from(e).context(self.features.display()))?;
        let rows = read_features_csv(BufReader::new(file))?;
        let mut hits: Vec<FeatureRow> = rows
            .into_iter()
            .filter(|r| self.application.as_ref().is_none_or(|a| *a == r.application))
            .filter(|r| self.kernel.as_ref().is_none_or(|k| *k == r.kernel))
            .filter(|r| self.size.is_none_or(|s| s == r.size))
            .collect();
        match hits.len() {
            1 => Ok(hits.pop().expect("one row")),
            0 => Err(CliError::input("no feature row matches the selection")),
            n => Err(CliError::input(format!(
                "{n} feature rows match; narrow with --application/--kernel/--size"
            ))),
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[command(flatten)]
    pub row: RowArgs,
    /// Device to predict for.
    #[arg(long)]
    pub device: String,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[command(flatten)]
    pub row: RowArgs,
}

pub fn parse_dims(s: &str) -> Result<[u64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(format!("expected X[,Y[,Z]], got `{s}`"));
    }
    let mut dims = [1u64; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p.parse().map_err(|_| format!("invalid size `{p}`"))?;
    }
    Ok(dims)
}

pub fn parse_kernel_arg(s: &str) -> Result<(String, i64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value = value
        .trim()
        .parse()
        .map_err(|_| format!("invalid integer in `{s}`"))?;
    Ok((name.trim().to_string(), value))
}

pub fn parse_triple(s: &str) -> Result<Triple, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("invalid integer `{p}`")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [t, m, n] => Ok(Triple::new(t, m, n)),
        _ => Err(format!("expected NUM_TREES,MTRY,MIN_NODE_SIZE, got `{s}`")),
    }
}

/// Seed of every forest fit.
pub fn forest_seed(seed: u64) -> u64 {
    derive_seed(seed, &[1])
}

/// Seed of the annealer.
pub fn sa_seed(seed: u64) -> u64 {
    derive_seed(seed, &[2])
}

/// Runs a parsed command, writing its primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::input("--jobs must be at least 1"));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Exec(e.to_string()))?;
    let seed = cli.seed;
    // Output is collected on the pool and written afterwards, so `out` need not be `Send`.
    let mut buf = Vec::new();
    let result = pool.install(|| {
        let w = &mut buf;
        match cli.command {
            Command::Characterize(a) => characterize::run(&a, w),
            Command::Train(a) => train(&a, seed, w),
            Command::Tune(a) => tune(&a, seed, w),
            Command::Predict(a) => predict(&a, w),
            Command::Rank(a) => rank(&a, w),
            Command::Experiment(e) => experiment::run(e, seed, w),
        }
    });
    out.write_all(&buf)?;
    result
}

fn train(args: &TrainArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let data = args.data.load()?;
    let train = data.training_set(args.forest.response)?;
    let forest = Forest::fit(&train, &args.forest.triple().with_seed(forest_seed(seed)))?;
    forest
        .save(&args.model)
        .map_err(|e| CliError::from(e).context(args.model.display()))?;
    let oob = forest.oob()?;
    writeln!(out, "rows,devices,oob_error_pct")?;
    writeln!(
        out,
        "{},{},{}",
        train.len(),
        data.devices().len(),
        format_real(oob.error_pct)
    )?;
    Ok(())
}

fn tune(args: &TuneArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let data = args.data.load()?;
    let train = data.training_set(args.response)?;
    let width = train.width();
    let mut space = SearchSpace::for_width(width);
    space.num_trees = (args.min_trees, args.max_trees);
    space.min_node_size = (1, args.max_min_node_size);
    for f in &args.fix {
        space.apply_fix(f).map_err(CliError::Input)?;
    }
    let start = args.start.unwrap_or_else(|| {
        let clamp = |v: usize, (lo, hi): (usize, usize)| v.clamp(lo, hi.max(lo));
        Triple::new(
            clamp(500, space.num_trees),
            clamp(32, space.mtry),
            clamp(9, space.min_node_size),
        )
    });
    let result = tune_forest(
        &train,
        &space,
        start,
        &args.schedule.schedule(),
        forest_seed(seed),
        sa_seed(seed),
        args.trace_out.as_deref(),
    )?;
    if let Some(path) = &args.model {
        let forest = Forest::fit(&train, &result.best.with_seed(forest_seed(seed)))?;
        forest
            .save(path)
            .map_err(|e| CliError::from(e).context(path.display()))?;
    }
    writeln!(out, "num_trees,mtry,min_node_size,error_pct,evaluations")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        result.best.num_trees,
        result.best.mtry,
        result.best.min_node_size,
        format_real(result.best_error),
        result.trace.len()
    )?;
    Ok(())
}

/// Loads a model and checks its predictor columns against the current feature schema.
fn load_model(path: &Path) -> Result<(Forest, Vec<String>), CliError> {
    let forest = Forest::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let columns = &forest.schema().columns;
    let devices = devices_of(columns);
    if *columns != predictor_columns(&devices) {
        return Err(CliError::Schema(format!(
            "{}: model was trained on a different feature schema (fingerprint {})",
            path.display(),
            forest.schema().fingerprint
        )));
    }
    Ok((forest, devices))
}

fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (forest, devices) = load_model(&args.model)?;
    let row = args.row.select()?;
    let x = predictor_row(&devices, &row.features, &args.device).ok_or_else(|| {
        CliError::input(format!(
            "unknown device `{}` (model knows: {})",
            args.device,
            devices.join(", ")
        ))
    })?;
    writeln!(out, "{}", format_real(forest.predict(&x)?))?;
    Ok(())
}

fn rank(args: &RankArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (forest, devices) = load_model(&args.model)?;
    let row = args.row.select()?;
    let mut ranked = devices
        .iter()
        .map(|d| {
            let x = predictor_row(&devices, &row.features, d).expect("model device");
            Ok((forest.predict(&x)?, d))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    for (t, d) in ranked {
        writeln!(out, "{d},{}", format_real(t))?;
    }
    Ok(())
}

/// Creates `path` for buffered writing, attributing failures to the path.
pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::from(e).context(path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn dims_fill_missing_axes_with_one() {
        assert_eq!(parse_dims("8").unwrap(), [8, 1, 1]);
        assert_eq!(parse_dims("8,4").unwrap(), [8, 4, 1]);
        assert_eq!(parse_dims("8, 4, 2").unwrap(), [8, 4, 2]);
        assert!(parse_dims("1,2,3,4").is_err());
        assert!(parse_dims("x").is_err());
    }

    #[test]
    fn kernel_args_and_triples_parse() {
        assert_eq!(parse_kernel_arg("n=-3").unwrap(), ("n".to_string(), -3));
        assert!(parse_kernel_arg("n").is_err());
        assert_eq!(parse_triple("505,30,9").unwrap(), Triple::new(505, 30, 9));
        assert!(parse_triple("505,30").is_err());
    }

    #[test]
    fn seeds_fan_out_to_distinct_streams() {
        assert_ne!(forest_seed(DEFAULT_SEED), sa_seed(DEFAULT_SEED));
        assert_ne!(forest_seed(DEFAULT_SEED), DEFAULT_SEED);
    }
}
