use anyhow::bail;
use clap::Args;
use pass_core::engine::{expected_ops_per_cycle_oracle, run_engine, EngineConfig};
use pass_core::netspec::LayerSpec;
use pass_core::trace::{generate_synthetic_trace, SparsityModel};
use rayon::prelude::*;

use crate::inputs::fmt_f64;
use crate::manifest::RunManifest;
use crate::output::{create_dir, write_csv};
use crate::RunArgs;

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 3)]
    pub kx: u32,
    #[arg(long, default_value_t = 3)]
    pub ky: u32,
    #[arg(long, default_value_t = 1)]
    pub k_min: u32,
    /// Defaults to the kernel size.
    #[arg(long)]
    pub k_max: Option<u32>,
    /// The sparsity grid is `i / p_steps` for `i = 0..=p_steps`.
    #[arg(long, default_value_t = 20)]
    pub p_steps: u32,
    /// Windows simulated per grid point.
    #[arg(long, default_value_t = 100_000)]
    pub windows: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: SweepArgs) -> anyhow::Result<()> {
    let kernel = args.kx * args.ky;
    let k_max = args.k_max.unwrap_or(kernel);
    if args.kx == 0 || args.ky == 0 {
        bail!("kernel dimensions must be at least 1");
    }
    if args.k_min < 1 || k_max > kernel || args.k_min > k_max {
        bail!(
            "k range [{}, {k_max}] must lie within [1, {kernel}]",
            args.k_min
        );
    }
    if args.p_steps == 0 || args.windows == 0 {
        bail!("--p-steps and --windows must be at least 1");
    }
    let layer = LayerSpec::new("sweep", 1, 1, 1, 1, args.kx, args.ky);
    // One trace per sparsity level, shared by every k.
    let blocks = (0..=args.p_steps)
        .into_par_iter()
        .map(|i| {
            let p = f64::from(i) / f64::from(args.p_steps);
            let trace = generate_synthetic_trace(
                &layer,
                1,
                args.windows,
                &SparsityModel::iid(p),
                args.run.seed.wrapping_add(u64::from(i)),
            )?;
            (args.k_min..=k_max)
                .map(|k| {
                    let cfg = EngineConfig::new(args.kx, args.ky, k)?;
                    let sim = run_engine(trace.stream(0), &cfg)?;
                    Ok(vec![
                        fmt_f64(p),
                        k.to_string(),
                        fmt_f64(sim.equivalent_ops_per_cycle),
                        fmt_f64(expected_ops_per_cycle_oracle(args.kx, args.ky, k, p)),
                    ])
                })
                .collect::<pass_core::Result<Vec<_>>>()
        })
        .collect::<pass_core::Result<Vec<_>>>()?;

    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("sweep-engine", &args.run.out);
    manifest.seed = Some(args.run.seed);
    manifest
        .option("kx", args.kx)
        .option("ky", args.ky)
        .option("k_min", args.k_min)
        .option("k_max", k_max)
        .option("p_steps", args.p_steps)
        .option("windows", args.windows);
    write_csv(
        &args.run.out,
        "sweep_engine.csv",
        &["sparsity", "k", "ops_per_cycle_sim", "ops_per_cycle_oracle"],
        blocks.into_iter().flatten(),
        &mut manifest,
    )?;
    manifest.write(&args.run.out)
}
