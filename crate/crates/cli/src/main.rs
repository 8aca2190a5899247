//! `kpp` — experiment runner for the branching-noise KPP simulator.
//!
//! Each subcommand maps onto one experiment family: single trajectories,
//! self-duality checks, extinction probabilities against the pure-branching
//! closed form, travelling-wave profiles and speeds, recurrence fractions,
//! upper-measure approximants, and pathwise coupled pairs.
//!
//! Runs are reproducible: all randomness derives from `mc.seed` through
//! counter-based streams, and outputs are byte-identical at any
//! `mc.parallelism`. The output directory comes from `output.dir`, overridden
//! by `--out-dir`, overridden by the `KPP_OUT_DIR` environment variable.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "kpp",
    version,
    about = "Monte Carlo lab for the KPP equation with branching noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML config file overlaying the subcommand defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default from config; KPP_OUT_DIR wins over both).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and export its observables.
    Simulate(CommonArgs),
    /// Estimate both sides of the self-duality identity.
    Duality(CommonArgs),
    /// Monte Carlo extinction probability vs the pure-branching closed form.
    Extinction(CommonArgs),
    /// Survival-conditioned travelling-wave profile and wave speed.
    Wave(CommonArgs),
    /// Fraction of surviving paths whose support revisits an interval.
    Recurrence(CommonArgs),
    /// Upper-measure approximants: moment bound and front-scaling probe.
    Upper(CommonArgs),
    /// Pathwise coupled pair (monotone or superprocess domination).
    Couple(CommonArgs),
    /// Print the effective config for a subcommand and exit.
    PrintConfig {
        /// Subcommand whose defaults to print.
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Duality(a) => ("duality", a),
        Command::Extinction(a) => ("extinction", a),
        Command::Wave(a) => ("wave", a),
        Command::Recurrence(a) => ("recurrence", a),
        Command::Upper(a) => ("upper", a),
        Command::Couple(a) => ("couple", a),
        Command::PrintConfig { name, config } => {
            return match RunConfig::load(name, config.as_deref()) {
                Ok(cfg) => {
                    print!(
                        "{}",
                        toml::to_string_pretty(&cfg).expect("config serializes")
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
            };
        }
    };

    let cfg = match RunConfig::load(name, args.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = std::env::var_os("KPP_OUT_DIR")
        .map(PathBuf::from)
        .or_else(|| args.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    match commands::run(name, &cfg, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
