use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wedgelab::experiments::{run, Command, RunOptions};
use wedgelab::Error;

#[derive(Parser)]
#[command(name = "wedgelab", version, about = "Seeded percolation experiments on lattice wedges")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify the wedge summation criteria for configured height functions.
    Gauge(Common),
    /// Sample bond configurations and dump them.
    Sample(Common),
    /// Gap diameters and their tail rate.
    Clusters(Common),
    /// Chemical versus L1 distance in the giant cluster.
    Apdist(Common),
    /// C-core of a region and the sub-wedge containment check.
    Core(Common),
    /// Minimum-energy flows and their path decompositions.
    Flow(Common),
    /// Transport of path measures onto the giant cluster.
    Bridge(Common),
    /// Effective-resistance scaling curves.
    Resist(Common),
    /// Block-event probability tables.
    Renorm(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory; defaults to the config's `out`, then `runs/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Gauge(c) => (Command::Gauge, c),
        Cmd::Sample(c) => (Command::Sample, c),
        Cmd::Clusters(c) => (Command::Clusters, c),
        Cmd::Apdist(c) => (Command::Apdist, c),
        Cmd::Core(c) => (Command::Core, c),
        Cmd::Flow(c) => (Command::Flow, c),
        Cmd::Bridge(c) => (Command::Bridge, c),
        Cmd::Resist(c) => (Command::Resist, c),
        Cmd::Renorm(c) => (Command::Renorm, c),
    };
    match execute(command, common) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("wedgelab {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command, common: Common) -> Result<PathBuf, Error> {
    let text = std::fs::read_to_string(&common.config)?;
    let configured = wedgelab::experiments::ExperimentConfig::parse(&text)?.out;
    let out = common
        .out
        .or(configured)
        .unwrap_or_else(|| PathBuf::from("runs").join(command.name()));
    let threads = common.threads.max(1);
    run(command, &text, &RunOptions { out: out.clone(), seed_offset: common.seed_offset, threads })?;
    Ok(out)
}
