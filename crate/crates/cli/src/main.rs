//! `advreg`: dataset generation, training, evaluation, the scenario matrix
//! and gradient checks from one binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or file-format
//! error, 4 contract violation, 5 gradient check above tolerance.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use advreg::evaluation::Regime;
use advreg::training::Scenario;
use clap::{Args, Parser, Subcommand};


#[derive(Parser, Debug)]
#[command(name = "advreg", version, about = "Patient-invariant plaque classification experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for `matrix`.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train one scenario and write a checkpoint and epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the held-out patients.
    Eval(EvalArgs),
    /// Run the scenario x regime x seed matrix.
    Matrix(MatrixArgs),
    /// Finite-difference check of the mini two-head model.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenDataArgs {
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub test_patients: Option<usize>,
    /// Images held by the test patients in total.
    #[arg(long)]
    pub test_images: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub confound: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainingFlags {
    /// N, AUG, ADV or AUG+ADV.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `full` or `reduced<N>`.
    #[arg(long)]
    pub regime: Option<Regime>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Skip the patient-identity probe on frozen trunk features.
    #[arg(long)]
    pub no_probe: bool,
}

#[derive(Args, Debug, Default)]
pub struct MatrixArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated scenario tags.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<Scenario>>,
    /// Comma-separated regimes, e.g. `full,reduced20`.
    #[arg(long, value_delimiter = ',')]
    pub regimes: Option<Vec<Regime>>,
    /// `1..5`, `3` or `0,2,7`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Keep the reduced-regime N column.
    #[arg(long)]
    pub all_columns: bool,
    /// Skip the patient probe.
    #[arg(long)]
    pub no_probe: bool,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&cli.common, &a),
        Command::Train(a) => commands::train(&cli.common, &a),
        Command::Eval(a) => commands::eval(&cli.common, &a),
        Command::Matrix(a) => commands::matrix(&cli.common, &a),
        Command::GradCheck(a) => commands::grad_check(&cli.common, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
