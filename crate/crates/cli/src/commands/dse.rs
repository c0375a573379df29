use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use pass_core::analytic::ThroughputModel;
use pass_core::dse::{anneal, design_document, size_buffers, split_lutram, DesignPoint};
use pass_core::netspec::load_budget;

use super::simulate::{
    layer_stats, model_rows, simulate_design, simulation_rows, MODEL_HEADER, SIMULATION_HEADER,
};
use crate::inputs::{fmt_f64, load_network, load_schedule, TraceArgs};
use crate::manifest::RunManifest;
use crate::output::{create_dir, write_csv, write_json};
use crate::RunArgs;

#[derive(Args, Debug)]
pub struct DseArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// JSON resource budget, `{"dsp": N, "lutram": N}`.
    #[arg(long)]
    pub budget: PathBuf,
    #[command(flatten)]
    pub traces: TraceArgs,
    /// Baseline design with engines that do not skip zeros.
    #[arg(long)]
    pub dense: bool,
    /// Buffer sizing stops once doubling the depth improves the metric by less than this.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 256)]
    pub w_max: u32,
    /// JSON annealing schedule; missing fields take their defaults.
    #[arg(long)]
    pub sa_config: Option<PathBuf>,
    /// Optimise the binomial throughput model instead of the linear one.
    #[arg(long)]
    pub exact_model: bool,
    /// Clock frequency recorded for `pass report`.
    #[arg(long)]
    pub freq_mhz: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: DseArgs) -> anyhow::Result<()> {
    let net = load_network(&args.network)?;
    let budget = load_budget(&args.budget)
        .with_context(|| format!("loading budget {}", args.budget.display()))?;
    let schedule = load_schedule(args.sa_config.as_deref(), args.run.seed)?;
    let model = if args.exact_model {
        ThroughputModel::Exact
    } else {
        ThroughputModel::Linear
    };
    let traces = args.traces.load(&net, args.run.seed)?;
    let stats = layer_stats(&traces, args.dense);

    let outcome = anneal(model, &net, &stats, &budget, &schedule).context("allocating MACs")?;
    let mut configs = outcome.design.configs.clone();

    let mut buffer_rows = Vec::new();
    let caps = split_lutram(budget.lutram, &configs);
    for ((c, trace), cap) in configs.iter_mut().zip(&traces).zip(caps) {
        // Dense engines take a fixed time per window: nothing to absorb.
        if args.dense {
            buffer_rows.push(vec![
                trace.layer().to_string(),
                c.n_in.to_string(),
                cap.to_string(),
                "0".into(),
                "false".into(),
                "false".into(),
            ]);
            continue;
        }
        let sizing = size_buffers(
            &trace.restream(c.n_in as usize),
            cap,
            args.epsilon,
            args.w_max,
        )
        .with_context(|| format!("sizing buffers of layer '{}'", trace.layer()))?;
        c.buffer_depth = sizing.depth;
        buffer_rows.push(vec![
            trace.layer().to_string(),
            c.n_in.to_string(),
            cap.to_string(),
            sizing.depth.to_string(),
            sizing.w_max_reduced.to_string(),
            sizing.cap_exceeded.to_string(),
        ]);
    }
    let design = DesignPoint::evaluate(model, &net, configs.clone(), &stats, &budget)?;
    let doc = design_document(model, &net, &design, &stats, &budget, args.dense)?;
    let sim = simulate_design(&net, &configs, &traces, args.dense)?;

    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("dse", &args.run.out);
    manifest.input(&args.network).input(&args.budget);
    if let Some(p) = &args.sa_config {
        manifest.input(p);
    }
    args.traces.record(&mut manifest);
    manifest.seed = Some(args.run.seed);
    manifest.frequency_mhz = args.freq_mhz;
    manifest
        .option("dense", args.dense)
        .option("epsilon", args.epsilon)
        .option("w_max", args.w_max)
        .option("throughput_model", model);

    write_json(&args.run.out, "design.json", &doc, &mut manifest)?;
    write_csv(
        &args.run.out,
        "convergence.csv",
        &["iteration", "temperature", "objective", "accepted"],
        outcome.log.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.temperature),
                fmt_f64(r.objective),
                r.accepted.to_string(),
            ]
        }),
        &mut manifest,
    )?;
    write_csv(
        &args.run.out,
        "buffers.csv",
        &[
            "layer",
            "N_I",
            "lutram_cap",
            "w",
            "w_max_reduced",
            "cap_exceeded",
        ],
        buffer_rows,
        &mut manifest,
    )?;
    write_csv(
        &args.run.out,
        "model.csv",
        &MODEL_HEADER,
        model_rows(&doc, &stats),
        &mut manifest,
    )?;
    write_csv(
        &args.run.out,
        "simulation.csv",
        &SIMULATION_HEADER,
        simulation_rows(&net, &configs, &sim),
        &mut manifest,
    )?;
    manifest.write(&args.run.out)?;

    println!(
        "objective {} images/cycle (model), {} images/cycle (simulated); DSP {}/{}, LUTRAM {}/{}",
        fmt_f64(doc.network_throughput),
        fmt_f64(sim.throughput),
        doc.dsp_total,
        budget.dsp,
        doc.lutram_total,
        budget.lutram
    );
    Ok(())
}
