//! `nclab`: train, sweep, intervene, predict, analyze and report.

mod analyze;
mod commands;
mod config;
mod plot;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigArgs;

#[derive(Parser)]
#[command(name = "nclab", version, about = "Neural-collapse emergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run (two-phase by default) into an output directory.
    Train(TrainArgs),
    /// Run one configuration per axis value and seed, then aggregate.
    Sweep(SweepArgs),
    /// Resume phase 2 from saved phase-1 checkpoints after rescaling features.
    Intervene(InterveneArgs),
    /// Evaluate the fn-crossing predictor on stored runs.
    Predict(PredictArgs),
    /// Summary statistics from run logs or fixture tables.
    Analyze(AnalyzeArgs),
    /// SVG charts and a Markdown summary for stored runs.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing, non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Train with cross-entropy only for the combined phase budget.
    #[arg(long)]
    pub ce_only: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// depth, width, weight_decay or activation.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args)]
pub struct InterveneArgs {
    /// Two-phase run directories holding phase-1 checkpoints, one per seed.
    #[arg(long = "runs", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Comma-separated rescaling factors; the unscaled control always runs.
    #[arg(long, value_delimiter = ',', default_value = "0.3,3.0")]
    pub alpha: Vec<f64>,
    #[arg(long, env = "NCLAB_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Run directories to evaluate.
    #[arg(long = "runs", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Earlier runs of the same model and dataset supplying fn*; without
    /// this, each group of runs is scored against its own mean.
    #[arg(long = "reference-runs", num_args = 1..)]
    pub reference_runs: Vec<PathBuf>,
    #[arg(long, default_value_t = nclab::dynamics::DEFAULT_LEAD)]
    pub lead: usize,
    /// Write the per-run CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Run directories, run logs or fixture CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Collapse threshold for bare log files without a manifest.
    #[arg(long, default_value_t = 0.01)]
    pub nc1_threshold: f64,
    /// Directory for CSV and Markdown outputs; Markdown goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for bootstrap intervals.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories to plot together.
    #[arg(long = "run", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Reference fn* line; defaults to the mean collapse norm of the runs.
    #[arg(long)]
    pub fn_star: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Intervene(a) => commands::intervene(a),
        Command::Predict(a) => commands::predict(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
