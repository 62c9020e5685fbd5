//! Command-line front end for `sgdrisk`: experiment configs in, CSV/JSON artifacts out.

pub mod commands;
pub mod config;
pub mod error;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{extract_overrides, ExperimentConfig, GridPoint, DEFAULT_CONFIG};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sgdrisk", version, about = "Exact risk curves, bounds and certificates for SGD on linear regression")]
#[command(after_help = "Any config field can be overridden with --section.key=value, e.g. --problem.sigma2=0.5")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment config; the bundled default when omitted
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir and SGDRISK_OUT_DIR)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid points and seeds
    #[arg(short, long)]
    pub jobs: Option<usize>,
    /// Run past the stability limit where the command supports it
    #[arg(long)]
    pub allow_unstable: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Exact expected-risk trajectory per grid point
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Also dump the per-coordinate diagonal (bias and variance tracks)
        #[arg(long)]
        per_coordinate: bool,
    },
    /// Closed-form upper and lower bounds next to the exact tail risk
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Exact tail-averaged risk
    TailRisk {
        #[command(flatten)]
        common: Common,
    },
    /// Seeded Monte Carlo SGD
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Run every certificate on the grid and write a verdict log
    Validate {
        #[command(flatten)]
        common: Common,
        /// Corrupt one recursion coefficient (negative control)
        #[arg(long, hide = true)]
        inject_coeff_bug: bool,
    },
    /// One summary row per grid point
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Evolve { common, .. }
            | Command::Bounds { common }
            | Command::TailRisk { common }
            | Command::Mc { common }
            | Command::Validate { common, .. }
            | Command::Sweep { common } => common,
        }
    }
}

/// Loads the config, applies overrides and dispatches. Returns the files written.
pub fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    let common = cli.command.common();
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("--config {}: {e}", path.display())))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let cfg = ExperimentConfig::load(&text, overrides)?;
    let ctx = commands::Context {
        out_dir: commands::resolve_out_dir(common.out.as_deref(), &cfg),
        cfg,
        allow_unstable: common.allow_unstable,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    match &cli.command {
        Command::Evolve { per_coordinate, .. } => commands::evolve(&ctx, *per_coordinate),
        Command::Bounds { .. } => commands::bounds(&ctx),
        Command::TailRisk { .. } => commands::tail_risk(&ctx),
        Command::Mc { .. } => commands::mc(&ctx),
        Command::Validate { inject_coeff_bug, .. } => commands::validate(&ctx, *inject_coeff_bug),
        Command::Sweep { .. } => commands::sweep(&ctx),
    }
}
