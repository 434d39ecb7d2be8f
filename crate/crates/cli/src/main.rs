use std::process::ExitCode;

use clap::Parser;
use stokes_qopr_cli::{configure_threads, execute, Cli, Command, RunConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(args) => RunConfig::from_args(args).and_then(|config| execute(&config)),
    });
    match result {
        Ok(csv) => {
            print!("{csv}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
