//! `pass`: profile sparsity traces, sweep the engine model, explore designs
//! and simulate them.

use clap::Parser;

fn main() -> anyhow::Result<()> {
    // Let clap print help, version and usage errors with its own formatting.
    let args: Vec<_> = std::env::args_os().collect();
    if let Err(e) = pass_cli::Cli::try_parse_from(&args) {
        e.exit();
    }
    pass_cli::configure_threads()?;
    pass_cli::run(args)
}
