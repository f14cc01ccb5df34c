//! `cavity-eit`: simulate, analyse and fit cavity EIT reflectivity spectra.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration or parse error, 3 model
//! domain error, 4 feature extraction failure, 5 fit not converged or
//! selftest failure, 6 oracle check failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Units;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("{0}")]
    Extraction(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    OracleFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Extraction(_) => 4,
            CliError::NotConverged(_) => 5,
            CliError::OracleFailed(_) => 6,
        }
    }
}

impl From<cavity_eit::Error> for CliError {
    fn from(e: cavity_eit::Error) -> Self {
        use cavity_eit::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::Io(_) => CliError::Io(msg),
            E::Parse(_) | E::Json(_) | E::InvalidParameter(_) => CliError::Config(msg),
            E::Domain(_) | E::BranchCut(_) | E::Singular(_) | E::Quadrature { .. } => CliError::Model(msg),
            E::Extraction { .. } => CliError::Extraction(msg),
            E::Fit(_) => CliError::NotConverged(msg),
            E::AtDetuning { .. } | E::InSpectrum { .. } => CliError::Model(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cavity-eit", version, about = "Cavity EIT and all-optical switching spectra")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout if omitted; required for plot).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Unit of every frequency in the config and overrides.
    #[arg(long, global = true, value_enum, default_value = "hz")]
    units: Units,
    /// Config override, e.g. `--set atoms.g_n=13.5e6` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set mode=<MODE>`.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Shorthand for `--set noise_sigma=<SIGMA>`.
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut all = self.set.clone();
        if let Some(m) = &self.mode {
            all.push(format!("mode={m}"));
        }
        if let Some(s) = self.noise_sigma {
            all.push(format!("noise_sigma={s}"));
        }
        all
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a reflectivity spectrum CSV.
    Simulate,
    /// Extract spectral features as JSON.
    Features {
        /// Take parameters and mode from a spectrum CSV instead of the config.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Fit the free parameters of `config.fit` to spectrum files.
    Fit { data: Vec<PathBuf> },
    /// Joint fit of several spectra sharing gamma0.
    FitGlobal { data: Vec<PathBuf> },
    /// Compare closed-form susceptibilities with the quadrature oracles.
    OracleCheck {
        #[arg(long, hide = true)]
        corrupt_closed_form: bool,
    },
    /// Features over `config.sweep` values, as CSV.
    Sweep,
    /// SVG line plot of spectrum or sweep files, plus a .dat file.
    Plot {
        inputs: Vec<PathBuf>,
        /// Sweep column to plot.
        #[arg(long, default_value = "max_transparency")]
        column: String,
    },
    /// Round-trip fit selftest.
    Selftest,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate => commands::simulate(c),
        Command::Features { spectrum } => commands::features(c, spectrum.as_deref()),
        Command::Fit { data } => commands::fit(c, data, false),
        Command::FitGlobal { data } => commands::fit(c, data, true),
        Command::OracleCheck { corrupt_closed_form } => commands::oracle_check(c, *corrupt_closed_form),
        Command::Sweep => commands::sweep(c),
        Command::Plot { inputs, column } => commands::plot(c, inputs, column),
        Command::Selftest => commands::selftest(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavity-eit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
