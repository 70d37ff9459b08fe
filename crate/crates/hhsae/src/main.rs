use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hhsae::commands::{self, Command};
use hhsae::config::load_config;
use hhsae::run_dir::RunDir;

/// Hybrid hierarchical sparse autoencoder pipeline.
#[derive(Debug, Parser)]
#[command(name = "hhsae", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Dotted-path override, e.g. `train.epochs=20` (repeatable).
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,

    #[arg(long, env = "HHSAE_RUN_DIR", default_value = "runs/default")]
    run_dir: PathBuf,

    /// Replaces the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref(), &cli.overrides, cli.seed)
        .and_then(|cfg| commands::run(cli.command, &cfg, &RunDir::create(&cli.run_dir)?));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::json!({ "command": cli.command.name(), "ok": true, "summary": summary }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
