use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use readmit::cli::{exit_code, run, Cli, EXIT_RUNTIME};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli).with_context(|| format!("`{name}` failed")) {
        Ok(manifest) => {
            log::info!("manifest written to {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.chain().find_map(|c| c.downcast_ref::<readmit::Error>()).map_or(EXIT_RUNTIME, exit_code);
            ExitCode::from(code)
        }
    }
}
