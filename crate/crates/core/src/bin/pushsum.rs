//! Config-driven CLI: `run` executes a simulation, `oracle` computes the
//! centralized reference solutions, `check` validates a config without
//! running anything.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pushsum::{runner, Error};

#[derive(Parser)]
#[command(name = "pushsum", version, about = "Penalty-based push-sum optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured simulation and write metrics.csv / final.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// oracle.json from a previous `oracle` invocation; enables
        /// relative_error.csv.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the configured instance with the reference oracles.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate the config: connectivity, parameter schedule, instance
    /// feasibility. Prints a JSON report; exits 0 iff everything passes.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn init_thread_pool() {
    if let Ok(threads) = std::env::var("PUSHSUM_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid PUSHSUM_THREADS = {threads:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_thread_pool();
    let cli = Cli::parse();

    let outcome: Result<bool, Error> = match &cli.command {
        Command::Run {
            config,
            out,
            oracle,
            seed,
        } => runner::cmd_run(config, out, oracle.as_deref(), *seed).map(|_| true),
        Command::Oracle { config, out, seed } => {
            runner::cmd_oracle(config, out, *seed).map(|_| true)
        }
        Command::Check { config, seed } => runner::cmd_check(config, *seed).and_then(|report| {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.pass)
        }),
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
