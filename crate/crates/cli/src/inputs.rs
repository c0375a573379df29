//! Loading of the input documents shared by several commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pass_core::dse::{AnnealSchedule, DesignDocument};
use pass_core::netspec::NetworkSpec;
use pass_core::trace::{generate_synthetic_trace, load_trace, SparsityModel, SparsityTrace};

use crate::manifest::RunManifest;

/// Where per-layer sparsity comes from.
#[derive(Args, Clone, Debug)]
pub struct TraceArgs {
    /// Trace files (binary `.pstr` or `.csv`), one per layer, matched by layer name.
    #[arg(long, num_args = 1.., conflicts_with = "synthetic")]
    pub traces: Vec<PathBuf>,
    /// Use i.i.d. synthetic traces with this zero probability instead of files.
    #[arg(long, value_name = "P_ZERO")]
    pub synthetic: Option<f64>,
    /// Windows per stream of synthetic traces.
    #[arg(long, default_value_t = 1024)]
    pub synthetic_windows: usize,
}

impl TraceArgs {
    pub fn record(&self, manifest: &mut RunManifest) {
        for t in &self.traces {
            manifest.input(t);
        }
        if let Some(p) = self.synthetic {
            manifest
                .option("synthetic", p)
                .option("synthetic_windows", self.synthetic_windows);
        }
    }

    /// One trace per network layer, in layer order.
    pub fn load(&self, net: &NetworkSpec, seed: u64) -> anyhow::Result<Vec<SparsityTrace>> {
        if let Some(p) = self.synthetic {
            return net
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let layer_seed =
                        seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    generate_synthetic_trace(
                        l,
                        l.c_in as usize,
                        self.synthetic_windows,
                        &SparsityModel::iid(p),
                        layer_seed,
                    )
                    .with_context(|| format!("generating a synthetic trace for layer '{}'", l.name))
                })
                .collect();
        }
        if self.traces.is_empty() {
            bail!("no sparsity source: pass --traces or --synthetic");
        }
        let mut slots: Vec<Option<SparsityTrace>> = vec![None; net.layers.len()];
        for path in &self.traces {
            let trace =
                load_trace(path).with_context(|| format!("loading trace {}", path.display()))?;
            let idx = net
                .layers
                .iter()
                .position(|l| l.name == trace.layer())
                .with_context(|| {
                    format!(
                        "trace {} is for layer '{}', which is not in the network",
                        path.display(),
                        trace.layer()
                    )
                })?;
            let layer = &net.layers[idx];
            if trace.window_len() != layer.kernel_size() as usize {
                bail!(
                    "trace {} has {}-element windows but layer '{}' has a {}x{} kernel",
                    path.display(),
                    trace.window_len(),
                    layer.name,
                    layer.k_x,
                    layer.k_y
                );
            }
            if slots[idx].replace(trace).is_some() {
                bail!("more than one trace given for layer '{}'", layer.name);
            }
        }
        let missing: Vec<&str> = net
            .layers
            .iter()
            .zip(&slots)
            .filter(|(_, s)| s.is_none())
            .map(|(l, _)| l.name.as_str())
            .collect();
        if !missing.is_empty() {
            bail!("no trace for layer(s): {}", missing.join(", "));
        }
        Ok(slots.into_iter().map(Option::unwrap).collect())
    }
}

pub fn load_network(path: &Path) -> anyhow::Result<NetworkSpec> {
    pass_core::netspec::load_network(path)
        .with_context(|| format!("loading network {}", path.display()))
}

pub fn load_schedule(path: Option<&Path>, seed: u64) -> anyhow::Result<AnnealSchedule> {
    let mut schedule = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing annealing schedule {}", p.display()))?
        }
        None => AnnealSchedule::default(),
    };
    schedule.seed = seed;
    schedule.validate()?;
    Ok(schedule)
}

pub fn load_design(path: &Path) -> anyhow::Result<DesignDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing design {}", path.display()))
}

/// Shortest round-trip text of a float, stable across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
