//! `gpbound`: fit GP models, compute misspecification error bounds over
//! grids, validate them against Monte Carlo, and run the built-in
//! state-space scenario.
//!
//! Every subcommand writes its outputs to files and exits nonzero with a
//! machine-readable JSON object on stderr when anything fails.

mod commands;
mod manifest;
mod model;
mod util;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gpbound", version, about = "GP regression with worst-case MSPE bounds")]
struct Cli {
    /// Seed for all randomness in the run (scenario configs may carry their
    /// own; an explicit flag wins).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for grid and Monte Carlo fan-out; the GPBOUND_THREADS
    /// environment variable takes precedence. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit kernel hyperparameters to a CSV dataset by maximum likelihood.
    Fit(commands::fit::FitArgs),
    /// Evaluate MSPE bounds (and optionally the exact MSPE) over a grid.
    Bound(commands::bound::BoundArgs),
    /// Monte Carlo validation of the exact MSPE at one test point.
    Validate(commands::validate::ValidateArgs),
    /// Run the full state-space scenario and export its curves.
    Scenario(commands::scenario::ScenarioArgs),
    /// Run kernel property checks over a hyperparameter box.
    CheckKernel(commands::check::CheckArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    init_thread_pool(cli.threads);

    let result = match &cli.command {
        Command::Fit(args) => commands::fit::run(args, cli.seed.unwrap_or(0)),
        Command::Bound(args) => commands::bound::run(args, cli.seed.unwrap_or(0)),
        Command::Validate(args) => commands::validate::run(args, cli.seed.unwrap_or(0)),
        Command::Scenario(args) => commands::scenario::run(args, cli.seed),
        Command::CheckKernel(args) => commands::check::run(args, cli.seed.unwrap_or(0)),
    };

    if let Err(err) = result {
        let kind = err
            .downcast_ref::<gpbound_core::Error>()
            .map(util::error_kind)
            .unwrap_or("error");
        eprintln!(
            "{}",
            serde_json::json!({ "error": format!("{err:#}"), "kind": kind })
        );
        std::process::exit(1);
    }
}

fn init_thread_pool(flag: Option<usize>) {
    let from_env = std::env::var("GPBOUND_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = from_env.or(flag) {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {err}");
        }
    }
}
