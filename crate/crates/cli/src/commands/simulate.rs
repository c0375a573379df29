use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pass_core::analytic::ThroughputModel;
use pass_core::dse::{design_document, DesignDocument, DesignPoint};
use pass_core::netspec::NetworkSpec;
use pass_core::pipeline::{simulate_network, LayerConfig, NetworkSimReport, SimOptions};
use pass_core::trace::{compute_stats, SparsityStats, SparsityTrace};

use crate::inputs::{fmt_f64, load_design, load_network, TraceArgs};
use crate::manifest::RunManifest;
use crate::output::{create_dir, write_csv, write_json};
use crate::RunArgs;

pub const SIMULATION_HEADER: [&str; 9] = [
    "layer",
    "N_I",
    "N_O",
    "k",
    "w",
    "measured_cycles",
    "model_cycles",
    "stall_cycles",
    "overhead_pct",
];

pub const MODEL_HEADER: [&str; 10] = [
    "layer",
    "N_I",
    "N_O",
    "k",
    "w",
    "mean_sparsity",
    "theta_min",
    "latency_cycles",
    "dsp",
    "lutram",
];

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Design document written by `pass dse`.
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub traces: TraceArgs,
    /// Engines without zero skipping. Implied by a dense design.
    #[arg(long)]
    pub dense: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub traces: TraceArgs,
    #[arg(long)]
    pub dense: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

fn load_consistent(network: &Path, design: &Path) -> anyhow::Result<(NetworkSpec, DesignDocument)> {
    let net = load_network(network)?;
    let doc = load_design(design)?;
    if doc.network().layers != net.layers {
        bail!(
            "design {} was made for a different network than {}",
            design.display(),
            network.display()
        );
    }
    Ok((net, doc))
}

/// Simulates `configs` with each trace mapped onto its layer's `N_I` streams.
pub fn simulate_design(
    net: &NetworkSpec,
    configs: &[LayerConfig],
    traces: &[SparsityTrace],
    dense: bool,
) -> anyhow::Result<NetworkSimReport> {
    let restreamed: Vec<SparsityTrace> = traces
        .iter()
        .zip(configs)
        .map(|(t, c)| t.restream(c.n_in as usize))
        .collect();
    simulate_network(net, configs, &restreamed, SimOptions { dense_mode: dense })
        .context("simulating the design")
}

pub fn simulation_rows(
    net: &NetworkSpec,
    configs: &[LayerConfig],
    sim: &NetworkSimReport,
) -> Vec<Vec<String>> {
    net.layers
        .iter()
        .zip(configs)
        .zip(&sim.layers)
        .map(|((l, c), r)| {
            vec![
                l.name.clone(),
                c.n_in.to_string(),
                c.n_out.to_string(),
                c.k.to_string(),
                c.buffer_depth.to_string(),
                r.measured_cycles.to_string(),
                r.model_cycles.to_string(),
                r.stall_cycles.to_string(),
                fmt_f64(r.overhead_fraction * 100.0),
            ]
        })
        .collect()
}

pub fn model_rows(doc: &DesignDocument, stats: &[SparsityStats]) -> Vec<Vec<String>> {
    doc.layers
        .iter()
        .zip(stats)
        .map(|(l, s)| {
            vec![
                l.shape.name.clone(),
                l.n_in.to_string(),
                l.n_out.to_string(),
                l.k.to_string(),
                l.w.to_string(),
                fmt_f64(s.global_mean),
                fmt_f64(l.theta_min),
                fmt_f64(l.latency_cycles),
                l.dsp.to_string(),
                l.lutram.to_string(),
            ]
        })
        .collect()
}

/// Per-layer stats as seen by the engines: all-zero sparsity in dense mode.
pub fn layer_stats(traces: &[SparsityTrace], dense: bool) -> Vec<SparsityStats> {
    traces
        .iter()
        .map(|t| {
            let s = compute_stats(t);
            if dense {
                s.dense_equivalent()
            } else {
                s
            }
        })
        .collect()
}

pub fn run_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let (net, doc) = load_consistent(&args.network, &args.design)?;
    let traces = args.traces.load(&net, args.run.seed)?;
    let dense = args.dense || doc.dense_mode;
    let configs = doc.configs();
    let sim = simulate_design(&net, &configs, &traces, dense)?;

    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("simulate", &args.run.out);
    manifest.input(&args.network).input(&args.design);
    args.traces.record(&mut manifest);
    manifest.seed = Some(args.run.seed);
    manifest.option("dense", dense);
    write_json(&args.run.out, "design.json", &doc, &mut manifest)?;
    write_csv(
        &args.run.out,
        "simulation.csv",
        &SIMULATION_HEADER,
        simulation_rows(&net, &configs, &sim),
        &mut manifest,
    )?;
    manifest.write(&args.run.out)
}

pub fn run_model(args: ModelArgs) -> anyhow::Result<()> {
    let (net, doc) = load_consistent(&args.network, &args.design)?;
    let traces = args.traces.load(&net, args.run.seed)?;
    let dense = args.dense || doc.dense_mode;
    let stats = layer_stats(&traces, dense);
    let point = DesignPoint::evaluate(
        ThroughputModel::Linear,
        &net,
        doc.configs(),
        &stats,
        &doc.budget,
    )?;
    let doc = design_document(
        ThroughputModel::Linear,
        &net,
        &point,
        &stats,
        &doc.budget,
        dense,
    )?;

    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("model", &args.run.out);
    manifest.input(&args.network).input(&args.design);
    args.traces.record(&mut manifest);
    manifest.seed = Some(args.run.seed);
    manifest.option("dense", dense);
    write_csv(
        &args.run.out,
        "model.csv",
        &MODEL_HEADER,
        model_rows(&doc, &stats),
        &mut manifest,
    )?;
    manifest.write(&args.run.out)
}
