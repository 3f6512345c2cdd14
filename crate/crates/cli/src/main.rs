//! `hsa`: build, simulate and audit secure aggregation schemes.
//!
//! Exit status: 0 all checks pass, 2 construction failure, 3 audit
//! failure, 4 configuration error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Outcome, Status};
use config::{Flags, RunConfig};

#[derive(Parser)]
#[command(name = "hsa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded random rounds and compare measured to optimal rates.
    Simulate(Flags),
    /// Run the security audits.
    Audit(Flags),
    /// Tabulate achievable rates and lower bounds.
    Rates(Flags),
    /// Report the chosen field and key parameter.
    SearchParams(Flags),
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("HSA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure {
        status: Status::Config,
        message: format!("HSA_THREADS must be a positive integer, got {v:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            status: Status::Config,
            message: e.to_string(),
        })
}

type Handler = fn(&RunConfig) -> Result<Outcome, Failure>;

fn run(cli: Cli) -> Result<Outcome, Failure> {
    init_threads()?;
    let (flags, cmd): (&Flags, Handler) = match &cli.command {
        Command::Simulate(f) => (f, commands::simulate),
        Command::Audit(f) => (f, commands::audit),
        Command::Rates(f) => (f, commands::rates),
        Command::SearchParams(f) => (f, commands::search_params),
    };
    let cfg = RunConfig::resolve(flags).map_err(|message| Failure {
        status: Status::Config,
        message,
    })?;
    let outcome = cmd(&cfg)?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, &outcome.body).map_err(|e| Failure {
            status: Status::Config,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                Status::Config
            } else {
                Status::Ok
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.body);
            ExitCode::from(outcome.status as u8)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status as u8)
        }
    }
}
