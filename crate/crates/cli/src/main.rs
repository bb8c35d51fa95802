//! Command-line front end: `study` runs a Monte Carlo study cell from a
//! config file, `estimate` applies one estimator to an exported population,
//! and `tables` re-aggregates entity files into the grouped table layout.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exits with status 2.
    Usage(String),
    /// Failure while running; exits with status 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<simcensus::Error> for CliError {
    fn from(e: simcensus::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "simcensus",
    version,
    about = "Simulated-census FGT poverty estimation under a two-fold nested error model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study cell and write tables.csv, entities.csv and
    /// run_manifest into the output directory
    Study(StudyArgs),
    /// Apply one estimator to an exported population CSV and write per-area
    /// and per-subarea estimates with naive MSEs
    Estimate(EstimateArgs),
    /// Merge entities.csv files and re-emit the grouped table layout
    Tables(TablesArgs),
}

#[derive(Args)]
pub struct StudyArgs {
    /// Study configuration file (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Override a config key; repeatable (e.g. --set I=10)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides the config's `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (overrides the config's `workers`; default:
    /// available parallelism)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Population CSV with columns d,j,k,x2..x_p,y
    #[arg(long)]
    population: PathBuf,
    /// Estimator: ELL, MELL1, MELL2 or ELL1
    #[arg(long)]
    estimator: String,
    /// Subareas sampled per area (m_d)
    #[arg(long, value_name = "M_D")]
    subareas_per_area: usize,
    /// Units sampled per sampled subarea (n_dj)
    #[arg(long, value_name = "N_DJ")]
    units_per_subarea: usize,
    /// FGT orders, comma separated
    #[arg(long, default_value = "0,1")]
    alphas: String,
    /// Simulated census count B
    #[arg(long, default_value_t = 100)]
    censuses: usize,
    #[arg(long)]
    seed: u64,
    /// Poverty line; computed as fraction x median welfare when absent
    #[arg(long)]
    poverty_line: Option<f64>,
    /// Fraction of the median welfare used when --poverty-line is absent
    #[arg(long, default_value_t = 0.6)]
    poverty_fraction: f64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the per-census simulated measures to censuses.csv
    #[arg(long, default_value_t = false)]
    dump_censuses: bool,
}

#[derive(Args)]
pub struct TablesArgs {
    /// entities.csv files to merge
    #[arg(required = false)]
    inputs: Vec<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Study(args) => commands::study::run(args),
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Tables(args) => commands::tables::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
