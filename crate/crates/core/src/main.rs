use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedtune::experiment::{run, Command, ExperimentConfig};
use fedtune::Error;

#[derive(Parser)]
#[command(name = "fedtune", version, about = "Distributed fine-tuning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the base model on general data.
    Pretrain(Args),
    /// Run averaging rounds from the base model.
    Finetune(Args),
    /// Estimate (epsilon, delta) from neighbouring model pairs.
    DpAudit(Args),
    /// Upload volume for a model size and protocol.
    CommReport(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::FAILURE
}

fn execute(command: Command, args: &Args) -> fedtune::Result<()> {
    if let Some(t) = args.threads {
        fedtune::exec::set_threads(t)?;
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    run(command, &cfg, &args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim()),
    };
    let (command, args) = match &cli.command {
        Cmd::Pretrain(a) => (Command::Pretrain, a),
        Cmd::Finetune(a) => (Command::Finetune, a),
        Cmd::DpAudit(a) => (Command::DpAudit, a),
        Cmd::CommReport(a) => (Command::CommReport, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(Error::kind(&e), &e.to_string()),
    }
}
