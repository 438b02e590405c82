//! `droplock`: batch pipelines over the droplet-ODMR simulation and
//! analysis library. Five commands cover the workflow — synthesize a trace,
//! estimate contrast from it, turn a contrast series into an Allan curve,
//! run a titration protocol, and generate confined-kinetics trajectories.
//!
//! Conventions shared by every command:
//!   - flat `key = value` config files (see `flatcfg`);
//!   - one master seed (`--seed`, default 0) feeding all randomness;
//!   - a `<out>.manifest.json` run record with output digests, such that
//!     re-running the recorded command reproduces the outputs byte for
//!     byte;
//!   - exit codes: 0 success, 2 bad configuration, 3 degenerate data,
//!     4 I/O failure. Nothing is read from the environment.

mod commands;
mod flatcfg;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use droplock_core::error::Error;

#[derive(Parser)]
#[command(name = "droplock", version, about = "Droplet ODMR synthesis and analysis pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a PL trace from a config file, with a ground-truth sidecar.
    Synth(SynthArgs),
    /// Estimate a contrast series from a trace file.
    Analyze(AnalyzeArgs),
    /// Allan deviation of a contrast CSV.
    Allan(AllanArgs),
    /// Simulated titration over a concentration list.
    Titrate(TitrateArgs),
    /// Confined Brownian trajectories plus a displacement histogram.
    Brownian(BrownianArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EstimatorFlag {
    /// Sideband-sum spectral estimator normalized by the droplet line.
    Paper,
    /// Sideband-pair spectral estimator; reads C/2.
    Si,
    /// Absolute spectral estimator; reads C directly.
    Exact,
    /// The paper estimator and the conventional arm side by side.
    Both,
    /// Single lock-in at f_MW over smoothed PL.
    Conventional,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Bin,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelFlag {
    /// Gadolinium contrast-quench model.
    Gd,
    /// TEMPOL contrast-quench model.
    Tempol,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Trace file to write; a `.truth.json` sidecar lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed override; wins over the config file's rng_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Bin)]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Trace file (binary or CSV, sniffed).
    pub trace: PathBuf,
    /// Config file naming the trace's nominal droplet and MW rates.
    #[arg(long)]
    pub config: PathBuf,
    /// Contrast CSV to write; summary JSON lands beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = EstimatorFlag::Exact)]
    pub estimator: EstimatorFlag,
    /// Analysis window length, seconds.
    #[arg(long, default_value_t = 0.7)]
    pub window_s: f64,
    /// Half-width of each spectral band, Hz.
    #[arg(long, default_value_t = 2.0)]
    pub band_hz: f64,
}

#[derive(Args)]
pub struct AllanArgs {
    /// Contrast CSV produced by `analyze`.
    pub contrast: PathBuf,
    /// Allan CSV to write (tau_s, sigma, n_pairs).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TitrateArgs {
    /// Config file for the blank instrument; analyte models scale it.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub model: ModelFlag,
    /// Comma list of concentrations in molar, e.g. `0,1e-7,5e-7`.
    #[arg(long)]
    pub concs: String,
    /// Acquisition time per concentration point, seconds.
    #[arg(long, default_value_t = 120.0)]
    pub point_s: f64,
    /// Discarded settling time between points, seconds.
    #[arg(long, default_value_t = 5.0)]
    pub settle_s: f64,
    #[arg(long, value_enum, default_value_t = EstimatorFlag::Si)]
    pub estimator: EstimatorFlag,
    #[arg(long, default_value_t = 7.0)]
    pub window_s: f64,
    #[arg(long, default_value_t = 2.0)]
    pub band_hz: f64,
}

#[derive(Args)]
pub struct BrownianArgs {
    /// Trajectory CSV to write; `.displacements.csv` lands beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub particles: usize,
    #[arg(long, default_value_t = 10.0)]
    pub duration_s: f64,
    /// Diffusion coefficient, um^2/s.
    #[arg(long, default_value_t = 4.0)]
    pub diffusion: f64,
    /// Confining droplet radius, um.
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    /// Integration step, seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub dt_s: f64,
    /// Alpha-stable tail index; Gaussian steps when absent.
    #[arg(long)]
    pub tail_alpha: Option<f64>,
    /// Histogram displacements over this many steps.
    #[arg(long, default_value_t = 50)]
    pub lag_steps: usize,
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
}

/// Failure with the exit code it maps to.
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::SampleRateMismatch { .. }
            | Error::WindowOutOfBounds { .. }
            | Error::BandOutsideNyquist { .. }
            | Error::TimeStepTooCoarse { .. } => 2,
            Error::Degenerate(_) | Error::NonConvergence { .. } => 3,
            Error::Format(_) | Error::Io(_) => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 4, message: e.to_string() }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Analyze(args) => commands::cmd_analyze(args),
        Command::Allan(args) => commands::cmd_allan(args),
        Command::Titrate(args) => commands::cmd_titrate(args),
        Command::Brownian(args) => commands::cmd_brownian(args),
    };
    if let Err(e) = result {
        eprintln!("droplock: {}", e.message);
        std::process::exit(e.code);
    }
}
