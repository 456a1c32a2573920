//! Command-line front end: config ingestion, experiment dispatch, tabular
//! and SVG output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure
//! (blow-up guard, infeasible threshold), 3 verification failure.

// validation uses `!(x > 0.0)` so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};
use plapmix::error::Error as CoreError;

#[derive(Parser)]
#[command(name = "plapmix", version, about = "Dissipation-time laboratory for the advection + p-Laplacian equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (key = value with `[sections]`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config key, e.g. --override nu.list=1e-2,1e-3 (repeatable)
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for independent runs
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Seed for random initial data
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Verbose progress on stderr
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation at the first configured viscosity
    Simulate,
    /// Measure the nonlinear dissipation time per viscosity
    MeasureKappa,
    /// Viscosity sweep with a log-log slope fit
    Sweep,
    /// Measure the mixing-norm series and fit a rate function
    MixingRate,
    /// Evaluate the closed-form bounds and thresholds
    Bounds,
    /// Run a verification suite
    Verify {
        /// f-iteration | identities | weyl | mixing-controls | transport-comparison
        #[arg(long)]
        suite: String,
    },
    /// Re-plot a CSV produced by another command
    Plot {
        input: PathBuf,
        #[arg(long)]
        logx: bool,
        #[arg(long)]
        logy: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    fn plot(msg: String) -> CliError {
        CliError::Config(msg)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BlowUp { .. }
            | CoreError::TimeStepTooLarge { .. }
            | CoreError::EnhancementInfeasible { .. }
            | CoreError::RateOutOfRange { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::parse("")?,
    };
    for spec in &cli.overrides {
        config.apply_override(spec)?;
    }
    let out = commands::default_out(&cli.out);

    match &cli.command {
        Command::Plot { input, logx, logy } => commands::plot_cmd(input, &out, *logx, *logy),
        Command::Verify { suite } if suite == "f-iteration" || suite == "identities" => {
            // these suites are configuration-free
            let exp = fallback_experiment(&config, &cli)?;
            commands::verify_cmd(suite, &exp, cli.verbose)
        }
        command => {
            let exp = config.experiment(cli.workers, cli.seed)?;
            // snapshot the effective configuration for replays
            std::fs::create_dir_all(&out).map_err(|e| CliError::Config(e.to_string()))?;
            std::fs::write(out.join("effective.cfg"), config.serialize())
                .map_err(|e| CliError::Config(e.to_string()))?;
            match command {
                Command::Simulate => commands::simulate_cmd(&config, &exp, &out, cli.verbose),
                Command::MeasureKappa => commands::measure_kappa_cmd(&exp, &out, cli.verbose),
                Command::Sweep => commands::sweep_cmd(&exp, &out, cli.verbose),
                Command::MixingRate => commands::mixing_rate_cmd(&config, &exp, &out, cli.verbose),
                Command::Bounds => commands::bounds_cmd(&config, &exp, &out),
                Command::Verify { suite } => commands::verify_cmd(suite, &exp, cli.verbose),
                Command::Plot { .. } => unreachable!(),
            }
        }
    }
}

/// The algebra-only suites run without a full experiment; synthesize a tiny
/// valid one when no config was given.
fn fallback_experiment(config: &Config, cli: &Cli) -> Result<plapmix::lab::ExperimentConfig, CliError> {
    if cli.config.is_some() {
        return Ok(config.experiment(cli.workers, cli.seed)?);
    }
    let mut minimal = Config::parse("[grid]\nd = 1\nn = 64\n[nu]\nlist = 1e-2\n[flow]\nkind = zero\n")?;
    for spec in &cli.overrides {
        minimal.apply_override(spec)?;
    }
    Ok(minimal.experiment(cli.workers, cli.seed)?)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
