//! command-line front end for the survdecomp library: simulate panels,
//! ingest spell files, estimate survival curves and hazard models, and
//! report causal decompositions.
//!
//! every subcommand is deterministic given its inputs and seed. exit
//! codes map the library's error classes: 2 bad configuration or
//! arguments, 3 invalid input data, 4 estimation failure, 5 i/o failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use survdecomp::error::ErrorClass;

#[derive(Parser)]
#[command(name = "survdecomp", version, about = "causal decomposition of duration spells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// simulate a search-model panel and export it as a spell file
    Simulate(SimulateArgs),
    /// product-limit survival curves as two-column files
    Km(KmArgs),
    /// nonparametric g-computation decomposition
    Gcomp(GcompArgs),
    /// fit the piecewise-constant proportional-hazard model
    Fit(FitArgs),
    /// fit the hazard model and report the causal decomposition
    Decompose(DecomposeArgs),
    /// principal-stratum shares and conditional effects
    Substrata(SubstrataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Covariates {
    /// ability dummies a2..a6, the DGP's observed heterogeneity
    ADummies,
    /// no covariate columns
    None,
}

/// flags shared by every command that ingests a spell file.
#[derive(Args)]
struct InputArgs {
    /// spell file to read
    #[arg(long)]
    input: PathBuf,
    /// column-mapping config (JSON); defaults to the standard header names
    #[arg(long)]
    schema: Option<PathBuf>,
    /// length of one period in the file's time units
    #[arg(long, default_value_t = 1.0)]
    unit: f64,
    /// number of periods on the grid; defaults to the latest terminal event
    #[arg(long)]
    horizon: Option<u32>,
}

/// baseline-segment flags shared by the model-based commands.
#[derive(Args)]
struct SpecArgs {
    /// number of equal-width baseline segments for both processes
    #[arg(long, default_value_t = 6)]
    segments: usize,
    /// width of each equal-width segment, in periods
    #[arg(long, default_value_t = 10.0)]
    width: f64,
    /// explicit exit-baseline segment starts (comma-separated, first 0)
    #[arg(long)]
    exit_starts: Option<String>,
    /// explicit treatment-baseline segment starts (comma-separated, first 0)
    #[arg(long)]
    treat_starts: Option<String>,
    /// optimizer iteration cap
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// gradient max-norm stopping tolerance
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    /// relative objective-change stopping tolerance
    #[arg(long, default_value_t = 1e-9)]
    rel_obj_tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// simulator config (JSON); defaults are the calibrated benchmark
    #[arg(long)]
    config: Option<PathBuf>,
    /// override: number of agents
    #[arg(long)]
    n_agents: Option<usize>,
    /// override: rng seed
    #[arg(long)]
    seed: Option<u64>,
    /// override: panel horizon in periods
    #[arg(long)]
    horizon: Option<u32>,
    /// covariate columns to export
    #[arg(long, value_enum, default_value_t = Covariates::ADummies)]
    covariates: Covariates,
    /// skip administrative and random censoring
    #[arg(long)]
    no_censoring: bool,
    /// spell file to write
    #[arg(long)]
    out: PathBuf,
    /// where to write the solved reservation table (JSON diagnostic)
    #[arg(long)]
    reservation_out: Option<PathBuf>,
}

#[derive(Args)]
struct KmArgs {
    #[command(flatten)]
    input: InputArgs,
    /// treat treatment onset as censoring, isolating never-treated survival
    #[arg(long)]
    censor_at_treatment: bool,
    /// also write one curve per regime
    #[arg(long)]
    by_regime: bool,
    /// directory for the curve files
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GcompArgs {
    #[command(flatten)]
    input: InputArgs,
    /// last treatment period entering the aggregated effects
    #[arg(long)]
    s_bar: u32,
    /// survival horizon of the effects
    #[arg(long)]
    tau: u32,
    /// regime whose treatment distribution weights the aggregates
    #[arg(long, default_value_t = 1)]
    weight_regime: u8,
    /// baseline regime of the take-up contrast alpha_z
    #[arg(long, default_value_t = 0)]
    alpha_baseline: u8,
    /// bridge empty risk-set cells with the last estimable value
    #[arg(long)]
    carry_forward: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    spec: SpecArgs,
    /// last treatment period entering the aggregated effects
    #[arg(long)]
    s_bar: u32,
    /// survival horizon of the effects
    #[arg(long)]
    tau: u32,
    /// regime whose treatment distribution weights the aggregates
    #[arg(long, default_value_t = 1)]
    weight_regime: u8,
    /// baseline regime of the take-up contrast alpha_z
    #[arg(long, default_value_t = 0)]
    alpha_baseline: u8,
    /// also report model-based substrata at this treatment period
    #[arg(long)]
    substrata_s: Option<u32>,
    /// Pr(cs) below this flags the complier effect as unstable
    #[arg(long, default_value_t = 1e-3)]
    cs_floor: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// also write the full fit (JSON) here
    #[arg(long)]
    fit_out: Option<PathBuf>,
}

#[derive(Args)]
struct SubstrataArgs {
    #[command(flatten)]
    input: InputArgs,
    /// treatment period defining the strata
    #[arg(long)]
    s: u32,
    /// survival horizon of the conditional effects
    #[arg(long)]
    tau: u32,
    /// regime whose treatment distribution weights the complier numerator
    #[arg(long, default_value_t = 1)]
    weight_regime: u8,
    /// Pr(cs) below this flags the complier effect as unstable
    #[arg(long, default_value_t = 1e-3)]
    cs_floor: f64,
    /// bridge empty risk-set cells with the last estimable value
    #[arg(long)]
    carry_forward: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Km(args) => commands::km(args),
        Command::Gcomp(args) => commands::gcomp(args),
        Command::Fit(args) => commands::fit(args),
        Command::Decompose(args) => commands::decompose(args),
        Command::Substrata(args) => commands::substrata(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Estimation => 4,
                ErrorClass::Io => 5,
            })
        }
    }
}
