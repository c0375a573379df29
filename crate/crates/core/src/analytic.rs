//! Closed-form resource and performance model.
//!
//! * DSP usage of a layer is `N_I·N_O·k`.
//! * An engine's mean throughput (windows/cycle) is
//!   `θ = min(1, k / ((1 − s̄)·K_x·K_y))` in the linear model, or
//!   `1 / E[max(1, ceil(N/k))]` with `N ~ Binomial(K_x·K_y, 1 − s̄)` in the
//!   exact model, which keeps the ceiling and the one-cycle floor the linear
//!   form drops.
//! * A layer's latency is its folded window count times the slowest engine's
//!   `1/θ`; network throughput is `B` over the slowest layer's latency.

use serde::{Deserialize, Serialize};

use crate::dse::buffer_lutram_cost;
use crate::engine::expected_window_cycles;
use crate::error::{Error, Result};
use crate::netspec::{LayerSpec, NetworkSpec, ResourceBudget};
use crate::pipeline::LayerConfig;
use crate::trace::SparsityStats;

/// Which engine throughput formula the model uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThroughputModel {
    /// `min(1, k / ((1 − s̄)·K))`.
    #[default]
    Linear,
    /// Binomial expectation of per-window cycles.
    Exact,
}

impl ThroughputModel {
    /// Mean cycles per window (`1/θ`) for an engine at mean sparsity `s̄`.
    pub fn cycles_per_window(self, k: u32, mean_sparsity: f64, k_x: u32, k_y: u32) -> f64 {
        match self {
            // Written as max(1, work/k) rather than 1/min(1, k/work) so that
            // integral ratios stay exact in floating point.
            ThroughputModel::Linear => {
                ((1.0 - mean_sparsity) * f64::from(k_x * k_y) / f64::from(k)).max(1.0)
            }
            ThroughputModel::Exact => expected_window_cycles(k_x, k_y, k, mean_sparsity),
        }
    }

    pub fn theta(self, k: u32, mean_sparsity: f64, k_x: u32, k_y: u32) -> f64 {
        1.0 / self.cycles_per_window(k, mean_sparsity, k_x, k_y)
    }
}

/// Per-layer DSP (MAC) count.
pub fn dsp_usage(config: &LayerConfig) -> u64 {
    u64::from(config.n_in) * u64::from(config.n_out) * u64::from(config.k)
}

/// Linear-model engine throughput in windows per cycle. Fully sparse input
/// (`s̄ = 1`) is clamped to one window per cycle.
pub fn engine_throughput(k: u32, mean_sparsity: f64, k_x: u32, k_y: u32) -> f64 {
    ThroughputModel::Linear.theta(k, mean_sparsity, k_x, k_y)
}

/// Exact-model engine throughput: `expected_ops_per_cycle_oracle / (K_x·K_y)`.
pub fn exact_engine_throughput(k: u32, mean_sparsity: f64, k_x: u32, k_y: u32) -> f64 {
    ThroughputModel::Exact.theta(k, mean_sparsity, k_x, k_y)
}

/// Windows each engine processes per image: `H_O·W_O·(C_I/N_I)·(C_O/N_O)`.
pub fn folded_windows(layer: &LayerSpec, config: &LayerConfig) -> u64 {
    u64::from(layer.h_out)
        * u64::from(layer.w_out)
        * u64::from(layer.c_in / config.n_in)
        * u64::from(layer.c_out / config.n_out)
}

/// Expands per-input-stream means to one entry per engine position
/// `(m, n)`, row-major in `m`.
pub fn replicate_per_engine(per_input: &[f64], n_out: u32) -> Vec<f64> {
    per_input
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, n_out as usize))
        .collect()
}

/// Average layer latency in cycles with the linear throughput model.
/// `per_engine_mean` holds one mean sparsity per engine position
/// (`N_I·N_O` entries).
pub fn layer_latency(
    layer: &LayerSpec,
    config: &LayerConfig,
    per_engine_mean: &[f64],
) -> Result<f64> {
    layer_latency_with(ThroughputModel::Linear, layer, config, per_engine_mean)
}

pub fn layer_latency_with(
    model: ThroughputModel,
    layer: &LayerSpec,
    config: &LayerConfig,
    per_engine_mean: &[f64],
) -> Result<f64> {
    config.validate_for(layer)?;
    let engines = (config.n_in * config.n_out) as usize;
    if per_engine_mean.len() != engines {
        return Err(Error::LengthMismatch {
            what: "per-engine mean sparsity",
            expected: engines,
            actual: per_engine_mean.len(),
        });
    }
    let slowest = per_engine_mean
        .iter()
        .map(|&s| model.cycles_per_window(config.k, s, layer.k_x, layer.k_y))
        .fold(0.0, f64::max);
    Ok(folded_windows(layer, config) as f64 * slowest)
}

/// Model estimate for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEstimate {
    /// Throughput of the slowest engine (windows per cycle).
    pub theta_min: f64,
    pub latency_cycles: f64,
    pub dsp: u64,
}

/// Latency of `layer` from trace statistics, mapping recorded streams onto
/// the `N_I` engine rows with [`SparsityStats::engine_means`].
pub fn estimate_layer(
    model: ThroughputModel,
    layer: &LayerSpec,
    config: &LayerConfig,
    stats: &SparsityStats,
) -> Result<LayerEstimate> {
    let per_input = stats.engine_means(config.n_in as usize);
    let per_engine = replicate_per_engine(&per_input, config.n_out);
    let latency = layer_latency_with(model, layer, config, &per_engine)?;
    Ok(LayerEstimate {
        theta_min: folded_windows(layer, config) as f64 / latency,
        latency_cycles: latency,
        dsp: dsp_usage(config),
    })
}

/// Network-level model estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputEstimate {
    pub layers: Vec<LayerEstimate>,
    /// Images per cycle, `B / max_i t̄_i`.
    pub network_throughput: f64,
}

pub fn estimate_network(
    model: ThroughputModel,
    net: &NetworkSpec,
    configs: &[LayerConfig],
    stats: &[SparsityStats],
) -> Result<ThroughputEstimate> {
    check_lengths(net, configs.len(), stats.len())?;
    let layers = net
        .layers
        .iter()
        .zip(configs)
        .zip(stats)
        .map(|((l, c), s)| estimate_layer(model, l, c, s))
        .collect::<Result<Vec<_>>>()?;
    let worst = layers.iter().map(|e| e.latency_cycles).fold(0.0, f64::max);
    Ok(ThroughputEstimate {
        layers,
        network_throughput: f64::from(net.batch_size) / worst,
    })
}

pub(crate) fn check_lengths(net: &NetworkSpec, configs: usize, stats: usize) -> Result<()> {
    let l = net.layers.len();
    if configs != l {
        return Err(Error::LengthMismatch {
            what: "layer configs",
            expected: l,
            actual: configs,
        });
    }
    if stats != l {
        return Err(Error::LengthMismatch {
            what: "layer stats",
            expected: l,
            actual: stats,
        });
    }
    Ok(())
}

/// Throughput of the slowest layer, `min_i B / t̄_i`, linear model.
pub fn network_objective(
    net: &NetworkSpec,
    configs: &[LayerConfig],
    stats: &[SparsityStats],
) -> Result<f64> {
    Ok(estimate_network(ThroughputModel::Linear, net, configs, stats)?.network_throughput)
}

pub fn total_dsp(configs: &[LayerConfig]) -> u64 {
    configs.iter().map(dsp_usage).sum()
}

/// Buffer memory of all layers; each layer buffers its `N_I` input streams.
pub fn total_lutram(configs: &[LayerConfig]) -> u64 {
    configs
        .iter()
        .map(|c| buffer_lutram_cost(c.buffer_depth, c.n_in))
        .sum()
}

/// True iff both resource totals fit the budget.
pub fn feasible(configs: &[LayerConfig], budget: &ResourceBudget) -> bool {
    total_dsp(configs) <= budget.dsp && total_lutram(configs) <= budget.lutram
}
