//! Command-line runner: synthetic data generation, training, evaluation and
//! allocation simulation, each writing a `manifest.json` next to its outputs.

pub mod commands;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use matchrep_core::{Error, ErrorKind};

pub use commands::{EvalRunConfig, SimRunConfig, TrainRunConfig};

#[derive(Debug, Parser)]
#[command(name = "matchrep", version, about = "Donor-recipient compatibility experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset, or attach surrogate outcomes to a CSV.
    Gen(GenArgs),
    /// Train the matching-representation model and requested baselines.
    Train(TrainArgs),
    /// Score saved models on the held-out split.
    Eval(EvalArgs),
    /// Replay a donor arrival stream under allocation policies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; defaults to `schema.json` beside the dataset.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Ground-truth CSV; defaults to `ground_truth.csv` beside the dataset
    /// when that file exists.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Named synthetic preset.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of records; overrides the configuration.
    #[arg(long)]
    pub n: Option<usize>,
    /// Feature CSV to receive surrogate outcomes instead of sampling.
    #[arg(long, requires = "schema")]
    pub input: Option<PathBuf>,
    /// Schema of `--input`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Accepted for symmetry with `gen`; training defaults already match it.
    #[arg(long)]
    pub preset: Option<String>,
    /// Weight of the representation-balancing term; 0 is the ablation.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated baselines, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub baselines: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Saved model files; each becomes one row of the comparison table.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Accepted for symmetry with `gen`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Saved models; typed models drive the model-guided policies.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
    /// Scorer for the unguided utility and benefit policies: `oracle` or
    /// the file stem of a `--model`.
    #[arg(long)]
    pub scorer: Option<String>,
}

pub fn run(cli: Cli) -> matchrep_core::Result<()> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

/// 2 configuration or usage, 3 data, 4 numerical divergence, 5 i/o.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Divergence => 4,
        ErrorKind::Io => 5,
    }
}
