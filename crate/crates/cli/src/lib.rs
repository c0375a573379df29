//! Command implementations behind the `pass` binary.

mod commands;
mod inputs;
mod manifest;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "pass",
    version,
    about = "Sparse streaming CNN accelerator toolflow"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-stream sparsity statistics and back-pressure metric of traces.
    Profile(commands::profile::ProfileArgs),
    /// Engine throughput against sparsity, simulated and exact.
    SweepEngine(commands::sweep::SweepArgs),
    /// Cycle simulation of a design.
    Simulate(commands::simulate::SimulateArgs),
    /// Analytic latency model of a design.
    Model(commands::simulate::ModelArgs),
    /// MAC allocation, buffer sizing and simulation of the result.
    Dse(commands::dse::DseArgs),
    /// Summary table of a finished run directory.
    Report(commands::report::ReportArgs),
    /// Writes synthetic traces for every layer of a network.
    Synth(commands::synth::SynthArgs),
}

/// Options shared by the commands that write a run directory.
#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Sizes the global rayon pool from `PASS_DSE_THREADS` if it is set.
pub fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("PASS_DSE_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("PASS_DSE_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// Parses a full command line (program name first) and runs the command.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Profile(a) => commands::profile::run(a),
        Command::SweepEngine(a) => commands::sweep::run(a),
        Command::Simulate(a) => commands::simulate::run_simulate(a),
        Command::Model(a) => commands::simulate::run_model(a),
        Command::Dse(a) => commands::dse::run(a),
        Command::Report(a) => commands::report::run(a),
        Command::Synth(a) => commands::synth::run(a),
    }
}
