use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pass_core::dse::DesignDocument;

use crate::inputs::load_design;
use crate::manifest::{RunManifest, MANIFEST_FILE};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory written by `pass dse` or `pass simulate`.
    pub run_dir: PathBuf,
    /// Clock frequency for GOP/s; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub freq_mhz: Option<f64>,
}

/// Published post-synthesis figures of one 3x3 engine per MAC count:
/// `(k, LUT, FF, MHz)`. Reference data only, not modelled.
const ENGINE_SYNTHESIS_3X3: [(u32, u32, u32, f64); 8] = [
    (1, 409, 686, 336.587),
    (2, 550, 686, 249.938),
    (3, 688, 752, 236.967),
    (4, 802, 752, 210.926),
    (5, 855, 848, 190.694),
    (6, 869, 880, 221.729),
    (7, 857, 880, 224.417),
    (8, 894, 880, 235.682),
];

pub fn engine_synthesis_reference(k_x: u32, k_y: u32, k: u32) -> Option<(u32, u32, f64)> {
    if (k_x, k_y) != (3, 3) {
        return None;
    }
    ENGINE_SYNTHESIS_3X3
        .iter()
        .find(|r| r.0 == k)
        .map(|&(_, lut, ff, mhz)| (lut, ff, mhz))
}

struct SimRow {
    layer: String,
    measured: u64,
    overhead_pct: f64,
}

fn read_simulation(path: &Path) -> anyhow::Result<Vec<SimRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no '{name}' column", path.display()))
    };
    let (layer, measured, overhead) =
        (col("layer")?, col("measured_cycles")?, col("overhead_pct")?);
    r.records()
        .map(|rec| {
            let rec = rec.with_context(|| format!("reading {}", path.display()))?;
            Ok(SimRow {
                layer: rec[layer].to_string(),
                measured: rec[measured]
                    .parse()
                    .with_context(|| format!("bad measured_cycles in {}", path.display()))?,
                overhead_pct: rec[overhead]
                    .parse()
                    .with_context(|| format!("bad overhead_pct in {}", path.display()))?,
            })
        })
        .collect()
}

pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    let dir = &args.run_dir;
    let required = [MANIFEST_FILE, "design.json", "simulation.csv"];
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        bail!(
            "run directory {} is missing: {}",
            dir.display(),
            missing.join(", ")
        );
    }
    let manifest = RunManifest::read(dir)?;
    let doc: DesignDocument = load_design(&dir.join("design.json"))?;
    let sims = read_simulation(&dir.join("simulation.csv"))?;
    if sims.len() != doc.layers.len()
        || sims
            .iter()
            .zip(&doc.layers)
            .any(|(s, l)| s.layer != l.shape.name)
    {
        bail!(
            "simulation.csv and design.json in {} describe different layers",
            dir.display()
        );
    }

    println!(
        "{:<16} {:>22} {:>4} {:>4} {:>2} {:>4} {:>10} {:>14} {:>14} {:>9} {:>6} {:>6}",
        "layer",
        "shape",
        "N_I",
        "N_O",
        "k",
        "w",
        "theta_min",
        "t_model",
        "t_measured",
        "overhead",
        "LUT",
        "FF"
    );
    for (l, s) in doc.layers.iter().zip(&sims) {
        let sh = &l.shape;
        let shape = format!(
            "{}>{} {}x{} k{}x{}",
            sh.c_in, sh.c_out, sh.h_out, sh.w_out, sh.k_x, sh.k_y
        );
        let (lut, ff) = match engine_synthesis_reference(sh.k_x, sh.k_y, l.k) {
            Some((lut, ff, _)) => (lut.to_string(), ff.to_string()),
            None => ("-".into(), "-".into()),
        };
        println!(
            "{:<16} {:>22} {:>4} {:>4} {:>2} {:>4} {:>10.4} {:>14.0} {:>14} {:>8.2}% {:>6} {:>6}",
            sh.name,
            shape,
            l.n_in,
            l.n_out,
            l.k,
            l.w,
            l.theta_min,
            l.latency_cycles,
            s.measured,
            s.overhead_pct,
            lut,
            ff
        );
    }
    println!(
        "DSP {}/{}  LUTRAM {}/{}  mode {}",
        doc.dsp_total,
        doc.budget.dsp,
        doc.lutram_total,
        doc.budget.lutram,
        if doc.dense_mode { "dense" } else { "sparse" }
    );

    let worst = sims.iter().map(|s| s.measured).max().unwrap_or(0);
    match args.freq_mhz.or(manifest.frequency_mhz) {
        Some(f) if worst > 0 => {
            let fps = f * 1e6 * f64::from(doc.batch_size) / worst as f64;
            let workload: u64 = doc.layers.iter().map(|l| l.shape.workload()).sum();
            let gops = 2.0 * workload as f64 * fps * 1e-9;
            println!("frequency {f} MHz  throughput {fps:.2} images/s  {gops:.2} GOP/s");
        }
        _ => println!(
            "throughput {:.6e} images/cycle (pass --freq-mhz for GOP/s)",
            f64::from(doc.batch_size) / worst.max(1) as f64
        ),
    }
    Ok(())
}
