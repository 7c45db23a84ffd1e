//! `medentropy`: synthesize corpora, train, evaluate, export entropy
//! analyses and serve a model over HTTP.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use commands::Command;
use config::{GlobalFlags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "medentropy", version, about, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    flags: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result =
        RunConfig::resolve(&cli.flags).and_then(|cfg| commands::execute(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line =
                serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
