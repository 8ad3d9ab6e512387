use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skillrank_cli::config::{JudgeKind, Overrides, ENDPOINT_ENV};
use skillrank_cli::error::{EXIT_NOT_CONVERGED, EXIT_OK};
use skillrank_cli::{
    cmd_build_pairs, cmd_correlate, cmd_monitor, cmd_rate, cmd_score, cmd_simulate, CliError, Outcome, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "skillrank",
    version,
    about = "Skill-rating tournaments over generated samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    judge: Option<JudgeKind>,
    /// Remote judge base URL.
    #[arg(long, global = true)]
    endpoint: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build strong, weak and human pair datasets.
    BuildPairs,
    /// Rate models (or samples) in a tournament.
    Rate,
    /// Score samples and models.
    Score,
    /// Correlate metric scores with human scores.
    Correlate,
    /// Replay checkpoints through the early-stopping rule.
    Monitor,
    /// Validate ranking recovery on synthetic players.
    Simulate,
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        judge: cli.judge,
        endpoint: cli.endpoint.clone(),
    };
    config.apply(&overrides, std::env::var(ENDPOINT_ENV).ok())?;
    config.validate()?;
    Ok(match cli.command {
        Command::BuildPairs => cmd_build_pairs(&config)?.0,
        Command::Rate => cmd_rate(&config)?.0,
        Command::Score => cmd_score(&config)?.0,
        Command::Correlate => cmd_correlate(&config)?.0,
        Command::Monitor => cmd_monitor(&config)?.0,
        Command::Simulate => cmd_simulate(&config)?.0,
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            println!("outputs written to {}", outcome.out_dir.display());
            if outcome.converged {
                ExitCode::from(EXIT_OK as u8)
            } else {
                eprintln!("warning: tournament did not converge within its budget");
                ExitCode::from(EXIT_NOT_CONVERGED as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
