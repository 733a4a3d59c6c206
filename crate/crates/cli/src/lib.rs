//! Batch front end for the `fluxnoise` simulations: loads a layered TOML
//! configuration, runs one subcommand and writes CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fluxnoise", version, about = "Flux-noise dephasing simulations for tunable transmons")]
pub struct Cli {
    /// TOML file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Phase accumulation mode (overrides ramsey.mode).
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Worker threads for ensemble work; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Linearized,
    Grid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flicker-noise spectrum of a fluctuator bath against theory.
    Psd,
    /// Monte Carlo Ramsey fringe with exponential and beating fits.
    Ramsey,
    /// Ramsey envelopes and T2* across qubit frequencies.
    Sweep,
    /// Beating contrast when a fixed amplitude is split over N fluctuators.
    MultiRtn,
    /// Fit a measured fringe given as a time_s,p1 CSV.
    Fit {
        /// Input CSV (overrides fit.input).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Psd => "psd",
            Command::Ramsey => "ramsey",
            Command::Sweep => "sweep",
            Command::MultiRtn => "multi-rtn",
            Command::Fit { .. } => "fit",
        }
    }
}

/// Effective configuration after the file, environment and flags.
pub fn effective_config(
    cli: &Cli,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig, CliError> {
    let mut config = config::load(cli.config.as_deref(), env)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.ramsey.mode = match mode {
            ModeArg::Linearized => config::ModeName::Linearized,
            ModeArg::Grid => config::ModeName::Grid,
        };
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
    Ok(config)
}

/// Runs the parsed command line; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = effective_config(cli, std::env::vars())?;
    let out = PathBuf::from(&config.output.dir);
    let work = || match &cli.command {
        Command::Psd => commands::cmd_psd(&config, &out),
        Command::Ramsey => commands::cmd_ramsey(&config, &out),
        Command::Sweep => commands::cmd_sweep(&config, &out),
        Command::MultiRtn => commands::cmd_multi_rtn(&config, &out),
        Command::Fit { input } => commands::cmd_fit(&config, input.as_deref(), &out),
    };
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}
