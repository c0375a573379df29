//! Behavioural cycle model of one sparse matrix-vector engine.
//!
//! Each kernel window of `K_x·K_y` activation/weight pairs goes through the
//! non-zero check; the crossbar forwards only non-zero pairs to `k` MACs, so a
//! window with `nnz` non-zeros occupies the engine for `max(1, ceil(nnz/k))`
//! cycles. The crossbar is conflict-free and pipeline fill/drain is not
//! counted: cycle totals are steady-state throughput figures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::WindowPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub k_x: u32,
    pub k_y: u32,
    /// MACs in the engine, `1 ≤ k ≤ K_x·K_y`.
    pub k: u32,
    /// Disables zero skipping: the baseline dense matrix-vector engine.
    pub dense_mode: bool,
}

impl EngineConfig {
    pub fn new(k_x: u32, k_y: u32, k: u32) -> Result<Self> {
        let cfg = EngineConfig {
            k_x,
            k_y,
            k,
            dense_mode: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dense(mut self) -> Self {
        self.dense_mode = true;
        self
    }

    pub fn kernel_size(&self) -> u32 {
        self.k_x * self.k_y
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_x == 0 || self.k_y == 0 {
            return Err(Error::invalid(
                "engine",
                "k_x",
                "kernel dimensions must be at least 1",
            ));
        }
        if self.k == 0 || self.k > self.kernel_size() {
            return Err(Error::invalid(
                "engine",
                "k",
                format!("{} is outside [1, {}]", self.k, self.kernel_size()),
            ));
        }
        Ok(())
    }

    /// Cycles spent on a window with `nnz` non-zero elements.
    #[inline]
    pub fn cycles_for_nnz(&self, nnz: u32) -> u32 {
        let work = if self.dense_mode {
            self.kernel_size()
        } else {
            nnz
        };
        work.div_ceil(self.k).max(1)
    }
}

/// Cycles the engine spends on one window.
pub fn window_cycles(pattern: &WindowPattern, config: &EngineConfig) -> Result<u32> {
    if pattern.len() != config.kernel_size() as usize {
        return Err(Error::LengthMismatch {
            what: "window pattern",
            expected: config.kernel_size() as usize,
            actual: pattern.len(),
        });
    }
    Ok(config.cycles_for_nnz(pattern.nnz()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineCycleReport {
    pub windows_processed: u64,
    pub total_cycles: u64,
    /// Dense-equivalent operations per cycle, `windows·K_x·K_y / cycles`.
    pub equivalent_ops_per_cycle: f64,
    /// Per-window cycle count → number of windows.
    pub cycles_histogram: BTreeMap<u32, u64>,
}

impl EngineCycleReport {
    /// Population standard deviation of per-window cycles.
    pub fn cycles_std_dev(&self) -> f64 {
        let n = self.windows_processed as f64;
        let mean = self.total_cycles as f64 / n;
        let var = self
            .cycles_histogram
            .iter()
            .map(|(&c, &count)| count as f64 * (f64::from(c) - mean).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt()
    }

    /// Standard deviation of a single window's contribution to the
    /// ops-per-cycle estimate (delta method on `K / mean_cycles`).
    pub fn ops_per_cycle_std_dev(&self, kernel_size: u32) -> f64 {
        let mean = self.total_cycles as f64 / self.windows_processed as f64;
        f64::from(kernel_size) * self.cycles_std_dev() / (mean * mean)
    }
}

/// Runs the engine over a stream of windows.
pub fn run_engine<'a, I>(stream: I, config: &EngineConfig) -> Result<EngineCycleReport>
where
    I: IntoIterator<Item = &'a WindowPattern>,
{
    config.validate()?;
    let mut histogram = BTreeMap::new();
    let mut windows = 0u64;
    let mut cycles = 0u64;
    for pattern in stream {
        let c = window_cycles(pattern, config)?;
        *histogram.entry(c).or_insert(0) += 1;
        windows += 1;
        cycles += u64::from(c);
    }
    if windows == 0 {
        return Err(Error::invalid(
            "engine run",
            "stream",
            "window stream is empty",
        ));
    }
    Ok(EngineCycleReport {
        windows_processed: windows,
        total_cycles: cycles,
        equivalent_ops_per_cycle: (windows * u64::from(config.kernel_size())) as f64
            / cycles as f64,
        cycles_histogram: histogram,
    })
}

/// Expected cycles per window when each element is zero independently with
/// probability `p_zero`: `E[max(1, ceil(N/k))]`, `N ~ Binomial(K, 1 − p_zero)`,
/// by exact summation.
pub fn expected_window_cycles(k_x: u32, k_y: u32, k: u32, p_zero: f64) -> f64 {
    let n = k_x * k_y;
    assert!(k >= 1 && k <= n, "k must be in [1, K_x·K_y]");
    let q = 1.0 - p_zero;
    let mut weighted = 0.0;
    let mut mass = 0.0;
    let mut binom = 1.0f64;
    for i in 0..=n {
        if i > 0 {
            binom = binom * f64::from(n - i + 1) / f64::from(i);
        }
        let pmf = binom * q.powi(i as i32) * p_zero.powi((n - i) as i32);
        weighted += pmf * f64::from(i.div_ceil(k).max(1));
        mass += pmf;
    }
    weighted / mass
}

/// Equivalent ops/cycle of the engine under i.i.d. element sparsity.
pub fn expected_ops_per_cycle_oracle(k_x: u32, k_y: u32, k: u32, p_zero: f64) -> f64 {
    f64::from(k_x * k_y) / expected_window_cycles(k_x, k_y, k, p_zero)
}
