use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use pass_core::trace::load_trace;

use crate::inputs::fmt_f64;
use crate::manifest::RunManifest;
use crate::output::{create_dir, write_csv};
use crate::RunArgs;

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub traces: Vec<PathBuf>,
    /// Largest moving-average window for the back-pressure metric.
    #[arg(long, default_value_t = 256)]
    pub w_max: u32,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: ProfileArgs) -> anyhow::Result<()> {
    let mut streams = Vec::new();
    let mut rho = Vec::new();
    for path in &args.traces {
        let trace =
            load_trace(path).with_context(|| format!("loading trace {}", path.display()))?;
        let counts = trace.zero_counts();
        let stats = counts.stats();
        for (m, (mean, var)) in stats
            .per_stream_mean
            .iter()
            .zip(&stats.per_stream_variance)
            .enumerate()
        {
            streams.push(vec![
                trace.layer().to_string(),
                m.to_string(),
                fmt_f64(*mean),
                fmt_f64(*var),
            ]);
        }
        // The metric compares streams; one stream has nothing to compare.
        if counts.num_streams() >= 2 {
            let mut w = 2u32;
            while w <= args.w_max && w as usize <= counts.len() {
                let r = counts.back_pressure_metric(w as usize)?;
                rho.push(vec![trace.layer().to_string(), w.to_string(), fmt_f64(r)]);
                w *= 2;
            }
        }
    }

    create_dir(&args.run.out)?;
    let mut manifest = RunManifest::new("profile", &args.run.out);
    for t in &args.traces {
        manifest.input(t);
    }
    manifest.option("w_max", args.w_max);
    write_csv(
        &args.run.out,
        "profile_streams.csv",
        &["layer", "stream", "mean_sparsity", "variance"],
        streams,
        &mut manifest,
    )?;
    write_csv(
        &args.run.out,
        "profile_rho.csv",
        &["layer", "w", "rho"],
        rho,
        &mut manifest,
    )?;
    manifest.write(&args.run.out)
}
