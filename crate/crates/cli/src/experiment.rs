use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};

use aiwc::dataset::{synthesize, SynthConfig};
use aiwc::experiments::plot::{Kind, Plot};
use aiwc::experiments::{
    evaluate, heatmap_scan, learning_curve, loko, min_node_scan, write_cell_errors_csv, write_heatmap_csv,
    write_learning_curve_csv, write_loko_csv, write_min_node_csv, write_predictions_csv, write_rank_csv,
    HeatmapConfig, LokoConfig,
};
use aiwc::forest::ResponseTransform;
use aiwc::tuner::Triple;

use crate::{create, forest_seed, parse_triple, sa_seed, CliError, DataArgs, ForestArgs};

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// OOB error for each min_node_size in a range, other parameters fixed.
    MinNodeScan(MinNodeScanArgs),
    /// Multi-start annealing over (num_trees, mtry); emits every visited cell.
    Heatmap(HeatmapArgs),
    /// Tune with each kernel left out in turn; emits per-omission optima and medians.
    Loko(LokoArgs),
    /// Prediction error on unseen kernels as the number of training kernels grows.
    LearningCurve(LearningCurveArgs),
    /// Hold-one-kernel-out predictions, per-cell errors and device ranking.
    Evaluate(EvaluateArgs),
    /// Write a synthetic dataset (features, runtimes, iterations, latent model).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotFormat {
    Svg,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output CSV (default: standard output).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl OutputArgs {
    fn write(
        &self,
        out: &mut dyn Write,
        body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        match &self.output {
            Some(path) => {
                let mut file = create(path)?;
                body(&mut file)?;
                file.flush()?;
                Ok(())
            }
            None => body(out),
        }
    }

    /// `<output>.svg`; plots need a file output to sit next to.
    fn plot_path(&self, plot: Option<PlotFormat>) -> Result<Option<PathBuf>, CliError> {
        match (plot, &self.output) {
            (None, _) => Ok(None),
            (Some(PlotFormat::Svg), Some(path)) => Ok(Some(path.with_extension("svg"))),
            (Some(_), None) => Err(CliError::input("--plot needs --output")),
        }
    }
}

#[derive(Debug, Args)]
pub struct MinNodeScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 300)]
    pub num_trees: usize,
    #[arg(long, default_value_t = 30)]
    pub mtry: usize,
    /// Smallest min_node_size scanned.
    #[arg(long, default_value_t = 1)]
    pub from: usize,
    /// Largest min_node_size scanned.
    #[arg(long, default_value_t = 50)]
    pub to: usize,
    #[arg(long, default_value = "log10")]
    pub response: ResponseTransform,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Also render a line plot next to the output.
    #[arg(long, value_enum)]
    pub plot: Option<PlotFormat>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Upper num_trees bound (the lower bound is 1).
    #[arg(long, default_value_t = 1000)]
    pub max_trees: usize,
    /// Value min_node_size is pinned to.
    #[arg(long, default_value_t = 9)]
    pub min_node_size: usize,
    /// Random interior starts, in addition to the four corners.
    #[arg(long, default_value_t = 8)]
    pub interior_starts: usize,
    /// Evaluation budget per chain.
    #[arg(long, default_value_t = 200)]
    pub evals: usize,
    #[arg(long, default_value = "log10")]
    pub response: ResponseTransform,
    /// Write each chain's annealing trace to `chain_<i>.csv` in this directory.
    #[arg(long)]
    pub traces_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LokoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Start point NUM_TREES,MTRY,MIN_NODE_SIZE (default: 500, min(32, width), 9).
    #[arg(long, value_parser = parse_triple)]
    pub start: Option<Triple>,
    #[arg(long, default_value_t = 10)]
    pub min_trees: usize,
    #[arg(long, default_value_t = 600)]
    pub max_trees: usize,
    /// Value min_node_size is pinned to.
    #[arg(long, default_value_t = 9)]
    pub min_node_size: usize,
    /// Evaluation budget per omission.
    #[arg(long, default_value_t = 6)]
    pub evals: usize,
    #[arg(long, default_value = "log10")]
    pub response: ResponseTransform,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LearningCurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Shuffles per kernel count.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Also render a line plot next to the output.
    #[arg(long, value_enum)]
    pub plot: Option<PlotFormat>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Directory for predictions.csv, cell_errors.csv and ranking.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also render predicted-vs-measured as predictions.svg.
    #[arg(long, value_enum)]
    pub plot: Option<PlotFormat>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to write into (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 37)]
    pub kernels: usize,
    #[arg(long, default_value_t = 15)]
    pub devices: usize,
    /// Standard deviation of the log10 measurement noise.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Timed iterations per measurement.
    #[arg(long, default_value_t = 8)]
    pub iterations: usize,
}

pub fn run(cmd: ExperimentCommand, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ExperimentCommand::MinNodeScan(a) => {
            let plot = a.output.plot_path(a.plot)?;
            if a.from == 0 || a.from > a.to {
                return Err(CliError::input("need 1 <= --from <= --to"));
            }
            let train = a.data.load()?.training_set(a.response)?;
            let rows = min_node_scan(&train, a.num_trees, a.mtry, a.from..=a.to, forest_seed(seed))?;
            a.output.write(out, |w| Ok(write_min_node_csv(w, &rows)?))?;
            if let Some(path) = plot {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .map(|r| (r.min_node_size as f64, r.error_pct))
                    .collect();
                let svg = Plot::new(
                    "OOB error by minimum node size",
                    "min_node_size",
                    "OOB error (%)",
                    Kind::Line,
                )
                .render(&points);
                write_file(&path, &svg)?;
            }
            Ok(())
        }
        ExperimentCommand::Heatmap(a) => {
            let train = a.data.load()?.training_set(a.response)?;
            let mut config = HeatmapConfig::desk(train.width(), seed);
            config.space.num_trees = (1, a.max_trees);
            config.space.min_node_size = (a.min_node_size, a.min_node_size);
            config.interior_starts = a.interior_starts;
            config.schedule.max_evaluations = a.evals;
            let scan = heatmap_scan(&train, &config)?;
            if let Some(dir) = &a.traces_dir {
                std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
                for (i, chain) in scan.chains.iter().enumerate() {
                    let path = dir.join(format!("chain_{i}.csv"));
                    chain
                        .trace
                        .save(&path)
                        .map_err(|e| CliError::from(e).context(path.display()))?;
                }
            }
            a.output.write(out, |w| Ok(write_heatmap_csv(w, &scan.cells)?))
        }
        ExperimentCommand::Loko(a) => {
            let data = a.data.load()?;
            let width = data.columns().len();
            let mut config = LokoConfig::desk(width, seed);
            config.space.num_trees = (a.min_trees, a.max_trees);
            config.space.min_node_size = (a.min_node_size, a.min_node_size);
            config.schedule.max_evaluations = a.evals;
            config.transform = a.response;
            config.start = a.start.unwrap_or(Triple::new(
                500.clamp(a.min_trees, a.max_trees.max(a.min_trees)),
                32.min(width),
                a.min_node_size,
            ));
            debug_assert_eq!(
                (config.forest_seed, config.sa_seed),
                (forest_seed(seed), sa_seed(seed))
            );
            let report = loko(&data, &config)?;
            a.output.write(out, |w| Ok(write_loko_csv(w, &report)?))
        }
        ExperimentCommand::LearningCurve(a) => {
            let plot = a.output.plot_path(a.plot)?;
            let data = a.data.load()?;
            let points = learning_curve(&data, a.samples, a.forest.triple(), a.forest.response, seed)?;
            a.output.write(out, |w| {
                Ok(write_learning_curve_csv(w, &points, a.forest.response)?)
            })?;
            if let Some(path) = plot {
                let xy: Vec<(f64, f64)> = points
                    .iter()
                    .filter_map(|p| p.mean_absolute_error.map(|m| (p.kernel_count as f64, m)))
                    .collect();
                let y_label = format!("mean absolute error ({})", a.forest.response.name());
                let svg = Plot::new(
                    "Error on unseen kernels",
                    "training kernels",
                    &y_label,
                    Kind::Line,
                )
                .render(&xy);
                write_file(&path, &svg)?;
            }
            Ok(())
        }
        ExperimentCommand::Evaluate(a) => {
            let data = a.data.load()?;
            let params = a.forest.triple().with_seed(forest_seed(seed));
            let eval = evaluate(&data, &params, a.forest.response)?;
            let dir = &a.out_dir;
            std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
            write_with(&dir.join("predictions.csv"), |w| {
                Ok(write_predictions_csv(w, &eval.predictions)?)
            })?;
            write_with(&dir.join("cell_errors.csv"), |w| {
                Ok(write_cell_errors_csv(w, &eval.cells)?)
            })?;
            write_with(&dir.join("ranking.csv"), |w| Ok(write_rank_csv(w, &eval.rank)?))?;
            if a.plot.is_some() {
                let mut plot = Plot::new(
                    "Predicted vs measured",
                    "measured (s)",
                    "predicted (s)",
                    Kind::Scatter,
                );
                plot.log_axes = true;
                plot.diagonal = true;
                let xy: Vec<(f64, f64)> = eval
                    .predictions
                    .iter()
                    .map(|p| (p.measured, p.predicted))
                    .collect();
                write_file(&dir.join("predictions.svg"), &plot.render(&xy))?;
            }
            writeln!(out, "rows,mean_cell_error_pct,rank_pairs,rank_accuracy")?;
            writeln!(
                out,
                "{},{},{},{}",
                eval.predictions.len(),
                aiwc::dataset::format_real(eval.mean_error_pct()),
                eval.rank.pairs,
                aiwc::dataset::format_real(eval.rank.accuracy())
            )?;
            Ok(())
        }
        ExperimentCommand::Synth(a) => {
            let config = SynthConfig {
                kernel_count: a.kernels,
                device_count: a.devices,
                noise: a.noise,
                iterations: a.iterations,
                seed,
                ..SynthConfig::default()
            };
            let synth = synthesize(&config)?;
            synth
                .write_dir(&a.out_dir)
                .map_err(|e| CliError::from(e).context(a.out_dir.display()))?;
            writeln!(out, "feature_rows,runtime_rows")?;
            writeln!(out, "{},{}", synth.features.len(), synth.runtimes.len())?;
            Ok(())
        }
    }
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut file = create(path)?;
    body(&mut file)?;
    file.flush()
        .map_err(|e| CliError::from(e).context(path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))
}
