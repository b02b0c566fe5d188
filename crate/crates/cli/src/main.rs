//! `homog` — periodic homogenization of magnetically forced Stokes
//! suspensions: cell problems, effective tensors, macro solves, and
//! fine-scale verification studies.

mod config;
mod error;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_config, CommandKind};
use error::CliError;

#[derive(Parser)]
#[command(name = "homog", version, about = "Homogenization toolkit for magnetic Stokes suspensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for independent solves.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and export effective tensors.
    Cell(RunArgs),
    /// Cell problems plus the macroscale potential/flow solve.
    Macro(RunArgs),
    /// Fine-scale (resolved-microstructure) solves over eps_list.
    Dns(RunArgs),
    /// Full corrector study: cell + macro + fine-scale comparison.
    Verify(RunArgs),
}

fn execute(kind: CommandKind, args: &RunArgs) -> Result<(), CliError> {
    let cfg = parse_config(&args.config)?;
    if cfg.command != kind {
        return Err(CliError::Config(format!(
            "config declares command \"{}\" but the \"{kind}\" subcommand was invoked",
            cfg.command
        )));
    }
    if args.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".to_string()));
    }
    pipeline::run(&cfg, &args.out, args.threads)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Cell(a) => (CommandKind::Cell, a),
        Command::Macro(a) => (CommandKind::Macro, a),
        Command::Dns(a) => (CommandKind::Dns, a),
        Command::Verify(a) => (CommandKind::Verify, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
