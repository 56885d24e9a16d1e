//! Command-line front end: `fit`, `plan`, `estimate`, `benchmark` and `select`.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::rates::{FamilyChoice, ValueKind};
use commands::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "camfmc", version, about = "Context-aware multi-fidelity Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Algebraic,
    Exponential,
    Auto,
}

impl From<FamilyArg> for FamilyChoice {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Algebraic => FamilyChoice::Algebraic,
            FamilyArg::Exponential => FamilyChoice::Exponential,
            FamilyArg::Auto => FamilyChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    /// Values are accuracy gaps `1 - ρ²(n)`.
    Accuracy,
    /// Values are costs `w(n)`.
    Cost,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config budgets (same units).
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Family used for rates fitted from pilot files.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
}

impl From<&CommonArgs> for RunArgs {
    fn from(a: &CommonArgs) -> Self {
        RunArgs {
            config: a.config.clone(),
            seed: a.seed,
            budget: a.budget,
            out: a.out.clone(),
            replicates: a.replicates,
            family: a.family.map(Into::into),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a rate model to a pilot series CSV (`n,value`).
    Fit {
        #[arg(long)]
        pilot: PathBuf,
        #[arg(long, value_enum, default_value = "accuracy")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "auto")]
        family: FamilyArg,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Training plan and sample allocation per budget.
    Plan(CommonArgs),
    /// One CA-MFMC estimate.
    Estimate(CommonArgs),
    /// Replicate MSE of the MC, MFMC and CA-MFMC estimators.
    Benchmark(CommonArgs),
    /// Rank model subsets by analytic MSE.
    Select(CommonArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Fit { pilot, kind, family, out } => {
            let kind = match kind {
                KindArg::Accuracy => ValueKind::AccuracyGap,
                KindArg::Cost => ValueKind::Cost,
            };
            commands::run_fit(pilot, kind, (*family).into(), out)
        }
        Command::Plan(a) => commands::run_plan(&a.into()),
        Command::Estimate(a) => commands::run_estimate(&a.into()),
        Command::Benchmark(a) => commands::run_benchmark(&a.into()),
        Command::Select(a) => commands::run_select(&a.into()),
    }
}

/// Entry point of the `camfmc` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
