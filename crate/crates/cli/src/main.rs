//! `repcorr`: the correction pipeline from the command line.
//!
//! Exit status is 0 on success, 1 on a runtime or data error and 2 on a
//! usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "repcorr", version, about = "Preference-controllable representation correction")]
pub struct Cli {
    /// Print one JSON document instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic task bundle.
    Synth(SynthArgs),
    /// Fit and cache the per-task correctors.
    Precompute(PrecomputeArgs),
    /// Assemble the corrector for one preference.
    Assemble(AssembleArgs),
    /// Score a corrector on the bundle.
    Eval(EvalArgs),
    /// Evaluate a grid of preferences and write the front.
    Sweep(SweepArgs),
    /// Cross-check the cached solution against the numerical oracles.
    Verify(VerifyArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub d_in: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub d_rep: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    pub classes: u64,
    /// Calibration samples per task.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Standard deviation of the noise added to merged representations.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Regularization strength recorded in the manifest.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Defaults to the manifest's value.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Scale beta by the mean per-dimension energy of the merged representations.
    #[arg(long)]
    pub beta_relative: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for the per-task fits.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[arg(long)]
    pub components: PathBuf,
    /// Comma-separated task weights.
    #[arg(long, allow_hyphen_values = true)]
    pub pref: String,
    /// Weighted average of the single-task correctors instead.
    #[arg(long)]
    pub naive: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, required_unless_present = "w")]
    pub components: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub pref: String,
    /// Evaluate this corrector instead of assembling one.
    #[arg(long)]
    pub w: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub components: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub resolution: u64,
    /// Comma-separated task indices that share the fixed mass.
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true, requires = "subset")]
    pub subset_mass: f64,
    #[arg(long)]
    pub naive: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub components: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub pref: String,
    /// Random perturbation directions tried against the assembled map.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub components: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
