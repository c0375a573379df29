use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use pass_core::trace::{
    generate_synthetic_trace, write_trace_binary, write_trace_csv, SparsityModel,
};

use crate::inputs::load_network;
use crate::manifest::RunManifest;
use crate::output::create_dir;
use crate::RunArgs;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Process {
    Iid,
    Bursty,
    Constant,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, value_enum, default_value_t = Process::Iid)]
    pub process: Process,
    #[arg(long)]
    pub p_zero: f64,
    /// Mean zero-run length in elements, bursty process only.
    #[arg(long, default_value_t = 16.0)]
    pub burst_length: f64,
    #[arg(long, default_value_t = 1024)]
    pub windows: usize,
    /// Streams per trace; defaults to the layer's input channels.
    #[arg(long)]
    pub streams: Option<usize>,
    /// Write CSV instead of the binary format.
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let net = load_network(&args.network)?;
    let model = match args.process {
        Process::Iid => SparsityModel::iid(args.p_zero),
        Process::Bursty => SparsityModel::MarkovBursty {
            p_zero: args.p_zero,
            burst_length: args.burst_length,
        },
        Process::Constant => SparsityModel::Constant {
            p_zero: args.p_zero,
        },
    };
    if args.streams == Some(0) {
        bail!("--streams must be at least 1");
    }
    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("synth", &args.run.out);
    manifest.input(&args.network);
    manifest.seed = Some(args.run.seed);
    manifest
        .option("model", &model)
        .option("windows", args.windows)
        .option("streams", args.streams);
    for (i, layer) in net.layers.iter().enumerate() {
        let streams = args.streams.unwrap_or(layer.c_in as usize);
        let seed = args
            .run
            .seed
            .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let trace = generate_synthetic_trace(layer, streams, args.windows, &model, seed)
            .with_context(|| format!("generating a trace for layer '{}'", layer.name))?;
        let name = format!("{}.{}", layer.name, if args.csv { "csv" } else { "pstr" });
        let path = args.run.out.join(&name);
        if args.csv {
            write_trace_csv(&trace, &path)?;
        } else {
            write_trace_binary(&trace, &path)?;
        }
        manifest.outputs.push(name);
    }
    manifest.write(&args.run.out)
}
