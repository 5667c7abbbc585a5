use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use factordiff_cli::commands;
use factordiff_cli::config::RunConfig;
use factordiff_cli::error::CliResult;

/// Conditional-diffusion return modeling and long-only portfolio
/// backtesting.
#[derive(Parser)]
#[command(name = "factordiff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; omitted fields use documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps worker threads for parallel stages (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.display().to_string();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel CSV with known factor structure.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the denoiser on a panel; writes checkpoint and loss curve.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Panel CSV (see README for the schema).
        panel: PathBuf,
    },
    /// Walk-forward backtest of all four strategies from a checkpoint.
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
        panel: PathBuf,
        checkpoint: PathBuf,
    },
    /// Factor-count ablation: retrain and backtest per (k, seed).
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        panel: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { common } => {
            let config = common.load()?;
            commands::cmd_synth(&config).map(|_| ())
        }
        Command::Train { common, panel } => {
            let config = common.load()?;
            commands::cmd_train(&config, &panel)
        }
        Command::Backtest {
            common,
            panel,
            checkpoint,
        } => {
            let config = common.load()?;
            commands::cmd_backtest(&config, &panel, &checkpoint)
        }
        Command::Ablate { common, panel } => {
            let jobs = common.jobs;
            let config = common.load()?;
            commands::cmd_ablate(&config, &panel, jobs)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("factordiff: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
