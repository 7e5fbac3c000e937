mod commands;
mod output;
mod scenario;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use commands::RunContext;
use scenario::ScenarioConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "miso-delay", version, about = "Delay-violation bounds and simulations for multiuser MISO downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expected service per user count and the delay bound versus arrival rate.
    Analyze(Common),
    /// Outage bounds against Monte Carlo for conditioned channel estimates.
    Validate(Common),
    /// Queue simulation at the bound-optimal schedule for each arrival rate.
    Simulate(Common),
    /// All of the above over the cross product of the configured sets.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `run.out` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (Command::Analyze(c) | Command::Validate(c) | Command::Simulate(c) | Command::Sweep(c)) = &cli.command;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring the thread pool")?;
    }
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.run.seed = Some(seed);
    }
    let out = c.out.clone().or_else(|| cfg.run.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    commands::ensure_dir(&out)?;
    let seed = cfg.seed();
    let ctx = RunContext { cfg, out, seed };
    match &cli.command {
        Command::Analyze(_) => commands::analyze(&ctx, "analyze"),
        Command::Validate(_) => commands::validate(&ctx, "validate"),
        Command::Simulate(_) => commands::simulate(&ctx, "simulate"),
        Command::Sweep(_) => commands::sweep(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
