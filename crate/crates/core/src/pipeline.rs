//! Event-driven simulation of one pipelined convolutional layer.
//!
//! A layer has `N_I` input streams feeding `N_I × N_O` engines. Every column
//! of `N_I` engines ends in a synchronisation barrier that fires once all of
//! its engines have produced their partial result for a window. Streams are
//! produced in lockstep, one window per stream per cycle, into a FIFO of
//! depth `w` in front of each engine; the source stalls while any FIFO is
//! full and an engine starves while its FIFO is empty. With `w = 0` engines
//! handshake directly with the stream head. The accumulator behind the
//! barrier is always ready.
//!
//! Because all columns read the same input streams they evolve identically,
//! so one column is simulated. The system is a max-plus recurrence over
//! window events, which is evaluated directly:
//!
//! ```text
//! e(t)     = max(e(t-1) + 1, max_m start_m(t-w))      w ≥ 1
//! e(t)     = max_m start_m(t-1) + 1                    w = 0
//! start_m  = max(e(t), finish_m(t-1))
//! finish_m = start_m(t) + cycles_m(t)
//! barrier(t) = max_m finish_m(t)
//! ```
//!
//! where `e(t)` is the cycle window `t` leaves the source. The measured
//! latency is the cycle of the last barrier firing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{layer_latency, replicate_per_engine};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::netspec::{LayerSpec, NetworkSpec};
use crate::trace::SparsityTrace;

/// Per-layer hardware choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerConfig {
    /// Input-channel parallelism `N_I`, divides `C_I`.
    pub n_in: u32,
    /// Output-channel parallelism `N_O`, divides `C_O`.
    pub n_out: u32,
    /// MACs per engine.
    pub k: u32,
    /// Windows buffered per input stream (`w`).
    pub buffer_depth: u32,
}

impl LayerConfig {
    pub fn new(n_in: u32, n_out: u32, k: u32, buffer_depth: u32) -> Self {
        LayerConfig {
            n_in,
            n_out,
            k,
            buffer_depth,
        }
    }

    /// All-ones configuration with no buffering.
    pub fn minimal() -> Self {
        LayerConfig::new(1, 1, 1, 0)
    }

    pub fn validate_for(&self, layer: &LayerSpec) -> Result<()> {
        let ctx = || format!("config of layer '{}'", layer.name);
        if self.n_in == 0 || !layer.c_in.is_multiple_of(self.n_in) {
            return Err(Error::invalid(
                ctx(),
                "n_in",
                format!("{} does not divide c_in {}", self.n_in, layer.c_in),
            ));
        }
        if self.n_out == 0 || !layer.c_out.is_multiple_of(self.n_out) {
            return Err(Error::invalid(
                ctx(),
                "n_out",
                format!("{} does not divide c_out {}", self.n_out, layer.c_out),
            ));
        }
        if self.k == 0 || self.k > layer.kernel_size() {
            return Err(Error::invalid(
                ctx(),
                "k",
                format!("{} is outside [1, {}]", self.k, layer.kernel_size()),
            ));
        }
        Ok(())
    }

    pub fn engine(&self, layer: &LayerSpec) -> EngineConfig {
        EngineConfig {
            k_x: layer.k_x,
            k_y: layer.k_y,
            k: self.k,
            dense_mode: false,
        }
    }
}

/// Outcome of one layer simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Windows per stream (`T`), one barrier output each.
    pub outputs: u64,
    pub measured_cycles: u64,
    /// Linear-model latency for the simulated windows, in whole cycles.
    pub model_cycles: u64,
    /// Cycles beyond the busiest engine's own work, lost to synchronisation.
    pub stall_cycles: u64,
    /// `measured / model − 1`.
    pub overhead_fraction: f64,
}

/// Layer simulation options beyond the layer configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Engines process every element of every window (no zero skipping).
    pub dense_mode: bool,
}

/// Simulates one layer with zero-skipping engines.
pub fn simulate_layer(
    layer: &LayerSpec,
    config: &LayerConfig,
    trace: &SparsityTrace,
) -> Result<SimReport> {
    simulate_layer_with(layer, config, trace, SimOptions::default())
}

pub fn simulate_layer_with(
    layer: &LayerSpec,
    config: &LayerConfig,
    trace: &SparsityTrace,
    options: SimOptions,
) -> Result<SimReport> {
    config.validate_for(layer)?;
    if trace.num_streams() != config.n_in as usize {
        return Err(Error::LengthMismatch {
            what: "trace streams (must equal N_I)",
            expected: config.n_in as usize,
            actual: trace.num_streams(),
        });
    }
    if trace.window_len() != layer.kernel_size() as usize {
        return Err(Error::LengthMismatch {
            what: "trace window length",
            expected: layer.kernel_size() as usize,
            actual: trace.window_len(),
        });
    }
    let mut engine = config.engine(layer);
    engine.dense_mode = options.dense_mode;
    let outputs = crate::analytic::folded_windows(layer, config);
    let t_len = trace.len();

    let mut cycles: Vec<Vec<u32>> = Vec::with_capacity(trace.num_streams());
    let mut mean_sparsity: Vec<f64> = Vec::with_capacity(trace.num_streams());
    let full_reps = outputs / t_len as u64;
    let remainder = (outputs % t_len as u64) as usize;
    for stream in trace.streams() {
        cycles.push(
            stream
                .iter()
                .map(|p| engine.cycles_for_nnz(p.nnz()))
                .collect(),
        );
        if options.dense_mode {
            mean_sparsity.push(0.0);
        } else {
            // Zeros in the cyclically tiled workload actually consumed.
            let all: u64 = stream.iter().map(|p| u64::from(p.zero_count())).sum();
            let head: u64 = stream[..remainder]
                .iter()
                .map(|p| u64::from(p.zero_count()))
                .sum();
            let zeros = full_reps * all + head;
            mean_sparsity.push(zeros as f64 / (outputs as f64 * f64::from(layer.kernel_size())));
        }
    }

    let run = run_barrier_pipeline(&cycles, outputs, config.buffer_depth as usize);
    let model = layer_latency(
        layer,
        config,
        &replicate_per_engine(&mean_sparsity, config.n_out),
    )?;
    let model_cycles = whole_cycles(model);
    Ok(SimReport {
        outputs,
        measured_cycles: run.measured,
        model_cycles,
        stall_cycles: run.measured - run.max_busy,
        overhead_fraction: run.measured as f64 / model_cycles as f64 - 1.0,
    })
}

/// Rounds a model latency up to whole cycles, ignoring floating-point noise
/// just above an integer.
fn whole_cycles(latency: f64) -> u64 {
    (latency * (1.0 - 1e-12)).ceil().max(1.0) as u64
}

pub(crate) struct PipelineRun {
    pub measured: u64,
    pub max_busy: u64,
}

/// Evaluates the lockstep-source / barrier recurrence for `outputs` windows,
/// reading `cycles[m][t mod len]`.
pub(crate) fn run_barrier_pipeline(cycles: &[Vec<u32>], outputs: u64, w: usize) -> PipelineRun {
    let m = cycles.len();
    let len = cycles[0].len();
    let slots = w + 1;
    // start times of the last w+1 windows, laid out [slot][stream]
    let mut starts = vec![0u64; slots * m];
    let mut finish = vec![0u64; m];
    let mut busy = vec![0u64; m];
    let mut emit = 0u64;
    let mut idx = 0usize;
    for t in 0..outputs {
        let slot = (t % slots as u64) as usize;
        if t > 0 {
            emit = if w == 0 {
                let prev = ((t - 1) % slots as u64) as usize;
                starts[prev * m..(prev + 1) * m]
                    .iter()
                    .copied()
                    .max()
                    .unwrap()
                    + 1
            } else if t >= w as u64 {
                let old = ((t - w as u64) % slots as u64) as usize;
                let freed = starts[old * m..(old + 1) * m]
                    .iter()
                    .copied()
                    .max()
                    .unwrap();
                (emit + 1).max(freed)
            } else {
                emit + 1
            };
        }
        let row = &mut starts[slot * m..(slot + 1) * m];
        for s in 0..m {
            let c = u64::from(cycles[s][idx]);
            let start = emit.max(finish[s]);
            row[s] = start;
            finish[s] = start + c;
            busy[s] += c;
        }
        idx += 1;
        if idx == len {
            idx = 0;
        }
    }
    PipelineRun {
        measured: finish.iter().copied().max().unwrap_or(0),
        max_busy: busy.iter().copied().max().unwrap_or(0),
    }
}

/// Simulates the same layer at several buffer depths.
pub fn simulate_buffer_sweep(
    layer: &LayerSpec,
    config: &LayerConfig,
    trace: &SparsityTrace,
    depths: &[u32],
) -> Result<Vec<SimReport>> {
    depths
        .par_iter()
        .map(|&w| {
            let c = LayerConfig {
                buffer_depth: w,
                ..*config
            };
            simulate_layer(layer, &c, trace)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSimReport {
    pub layers: Vec<SimReport>,
    /// Images per cycle, `B / max_i measured_i`.
    pub throughput: f64,
}

/// Simulates every layer independently against its own trace.
pub fn simulate_network(
    net: &NetworkSpec,
    configs: &[LayerConfig],
    traces: &[SparsityTrace],
    options: SimOptions,
) -> Result<NetworkSimReport> {
    crate::analytic::check_lengths(net, configs.len(), configs.len())?;
    if traces.len() != net.layers.len() {
        return Err(Error::LengthMismatch {
            what: "layer traces",
            expected: net.layers.len(),
            actual: traces.len(),
        });
    }
    let layers = net
        .layers
        .par_iter()
        .zip(configs)
        .zip(traces)
        .map(|((l, c), t)| simulate_layer_with(l, c, t, options))
        .collect::<Result<Vec<_>>>()?;
    let worst = layers.iter().map(|r| r.measured_cycles).max().unwrap_or(1);
    Ok(NetworkSimReport {
        throughput: f64::from(net.batch_size) / worst as f64,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use super::*;
    use crate::trace::{generate_synthetic_trace, SparsityModel, WindowPattern};
    use proptest::prelude::*;

    /// Cycle-by-cycle reference with explicit FIFOs, independent of the
    /// recurrence above. Returns the cycle of the last barrier firing.
    fn step_reference(cycles: &[Vec<u32>], outputs: usize, w: usize) -> u64 {
        let m = cycles.len();
        let len = cycles[0].len();
        let mut fifo: Vec<VecDeque<usize>> = vec![VecDeque::new(); m];
        let mut busy_until = vec![0u64; m];
        let mut working = vec![false; m];
        let mut done = vec![0usize; m];
        let mut next = 0usize;
        // w = 0: which engines already took the window on offer
        let mut taken = vec![false; m];
        let mut offered_at = 0u64;
        let mut clock = 0u64;
        loop {
            for s in 0..m {
                if working[s] && busy_until[s] == clock {
                    working[s] = false;
                    done[s] += 1;
                }
            }
            if done.iter().all(|&d| d == outputs) {
                return clock;
            }
            if w == 0 {
                if next < outputs && clock >= offered_at {
                    for s in 0..m {
                        if !working[s] && !taken[s] {
                            taken[s] = true;
                            working[s] = true;
                            busy_until[s] = clock + u64::from(cycles[s][next % len]);
                        }
                    }
                    if taken.iter().all(|&x| x) {
                        taken.iter_mut().for_each(|x| *x = false);
                        next += 1;
                        offered_at = clock + 1;
                    }
                }
            } else {
                for phase in 0..3 {
                    if phase == 1 {
                        if next < outputs && fifo.iter().all(|f| f.len() < w) {
                            fifo.iter_mut().for_each(|f| f.push_back(next));
                            next += 1;
                        }
                        continue;
                    }
                    for s in 0..m {
                        if !working[s] {
                            if let Some(t) = fifo[s].pop_front() {
                                working[s] = true;
                                busy_until[s] = clock + u64::from(cycles[s][t % len]);
                            }
                        }
                    }
                }
            }
            clock += 1;
        }
    }

    fn layer(c_in: u32, c_out: u32, hw: u32) -> LayerSpec {
        LayerSpec::new("l", c_in, c_out, hw, hw, 3, 3)
    }

    #[test]
    fn dense_trace_full_k_runs_one_window_per_cycle() {
        let l = layer(4, 4, 4);
        let t = generate_synthetic_trace(&l, 2, 10, &SparsityModel::iid(0.0), 0).unwrap();
        for w in [0, 1, 2, 16] {
            let r = simulate_layer(&l, &LayerConfig::new(2, 2, 9, w), &t).unwrap();
            assert_eq!(r.outputs, 4 * 4 * 2 * 2);
            assert_eq!(r.measured_cycles, r.outputs);
            assert_eq!(r.stall_cycles, 0);
            assert_eq!(r.model_cycles, r.outputs);
        }
    }

    #[test]
    fn slowest_stream_dominates_without_buffer() {
        let l = layer(2, 1, 5);
        let sparse = vec![WindowPattern::empty(9); 7];
        let dense = vec![WindowPattern::dense(9); 7];
        let t = SparsityTrace::new("l", 9, vec![sparse, dense]).unwrap();
        let r = simulate_layer(&l, &LayerConfig::new(2, 1, 1, 0), &t).unwrap();
        assert_eq!(r.outputs, 25);
        assert_eq!(r.measured_cycles, 9 * 25);
        assert_eq!(r.stall_cycles, 0);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let l = layer(4, 4, 2);
        let t = generate_synthetic_trace(&l, 3, 10, &SparsityModel::iid(0.5), 0).unwrap();
        assert!(simulate_layer(&l, &LayerConfig::new(2, 1, 1, 0), &t).is_err());
        assert!(simulate_layer(&l, &LayerConfig::new(3, 1, 1, 0), &t).is_err());
        let small = LayerSpec::new("s", 3, 1, 2, 2, 2, 2);
        assert!(simulate_layer(&small, &LayerConfig::new(3, 1, 1, 0), &t).is_err());
    }

    #[test]
    fn recurrence_matches_cycle_stepper() {
        let l = layer(4, 1, 3);
        for seed in 0..20u64 {
            let model = if seed % 2 == 0 {
                SparsityModel::iid(0.5)
            } else {
                SparsityModel::MarkovBursty {
                    p_zero: 0.5,
                    burst_length: 6.0,
                }
            };
            let t = generate_synthetic_trace(&l, 3, 23, &model, seed).unwrap();
            let cfg = EngineConfig::new(3, 3, 1 + (seed % 3) as u32).unwrap();
            let cycles: Vec<Vec<u32>> = t
                .streams()
                .iter()
                .map(|s| s.iter().map(|p| cfg.cycles_for_nnz(p.nnz())).collect())
                .collect();
            for w in [0usize, 1, 2, 3, 5, 8] {
                let fast = run_barrier_pipeline(&cycles, 40, w).measured;
                let slow = step_reference(&cycles, 40, w);
                assert_eq!(fast, slow, "seed {seed} w {w}");
            }
        }
    }

    fn arb_cycles() -> impl Strategy<Value = Vec<Vec<u32>>> {
        (1usize..5, 1usize..30).prop_flat_map(|(m, len)| {
            prop::collection::vec(prop::collection::vec(1u32..10, len), m)
        })
    }

    proptest! {
        #[test]
        fn stepper_agrees(cycles in arb_cycles(), outputs in 1usize..50, w in 0usize..6) {
            prop_assert_eq!(
                run_barrier_pipeline(&cycles, outputs as u64, w).measured,
                step_reference(&cycles, outputs, w)
            );
        }

        #[test]
        fn buffering_never_hurts(cycles in arb_cycles(), outputs in 1u64..200) {
            let mut prev = u64::MAX;
            for w in 0..12 {
                let run = run_barrier_pipeline(&cycles, outputs, w);
                prop_assert!(run.measured <= prev);
                prop_assert!(run.measured >= run.max_busy);
                prop_assert!(run.measured >= outputs);
                prev = run.measured;
            }
        }

        #[test]
        fn never_faster_than_model(seed in any::<u64>(), p in 0.0f64..1.0, k in 1u32..=9, w in 0u32..40, n_in in 1u32..5) {
            let l = LayerSpec::new("l", 4 * n_in, 2, 3, 3, 3, 3);
            let t = generate_synthetic_trace(&l, n_in as usize, 37, &SparsityModel::iid(p), seed).unwrap();
            let r = simulate_layer(&l, &LayerConfig::new(n_in, 1, k, w), &t).unwrap();
            prop_assert!(r.measured_cycles >= r.model_cycles, "{:?}", r);
            prop_assert!(r.stall_cycles <= r.measured_cycles);
            let d = simulate_layer_with(&l, &LayerConfig::new(n_in, 1, k, w), &t, SimOptions { dense_mode: true }).unwrap();
            prop_assert!(d.measured_cycles >= d.model_cycles);
            prop_assert!(d.measured_cycles >= r.measured_cycles);
        }
    }

    #[test]
    fn network_throughput_is_bottleneck() {
        let net = NetworkSpec {
            batch_size: 2,
            layers: vec![
                layer(2, 2, 4),
                LayerSpec {
                    name: "m".into(),
                    ..layer(2, 2, 4)
                },
                LayerSpec {
                    name: "n".into(),
                    ..layer(2, 2, 4)
                },
            ],
        };
        let traces: Vec<SparsityTrace> = (0..3)
            .map(|i| {
                generate_synthetic_trace(&net.layers[i], 2, 64, &SparsityModel::iid(0.5), i as u64)
                    .unwrap()
            })
            .collect();
        let configs = [
            LayerConfig::new(2, 2, 3, 4),
            LayerConfig::new(2, 2, 1, 4),
            LayerConfig::new(2, 2, 3, 4),
        ];
        let r = simulate_network(&net, &configs, &traces, SimOptions::default()).unwrap();
        let worst = r.layers.iter().map(|l| l.measured_cycles).max().unwrap();
        assert_eq!(worst, r.layers[1].measured_cycles);
        assert_eq!(r.throughput, 2.0 / worst as f64);

        let single = NetworkSpec {
            batch_size: 2,
            layers: vec![net.layers[0].clone()],
        };
        let one =
            simulate_network(&single, &configs[..1], &traces[..1], SimOptions::default()).unwrap();
        assert_eq!(one.throughput, 2.0 / one.layers[0].measured_cycles as f64);
        let twin = NetworkSpec {
            batch_size: 2,
            layers: vec![
                net.layers[0].clone(),
                LayerSpec {
                    name: "twin".into(),
                    ..net.layers[0].clone()
                },
            ],
        };
        let two = simulate_network(
            &twin,
            &[configs[0]; 2],
            &[traces[0].clone(), traces[0].clone()],
            SimOptions::default(),
        )
        .unwrap();
        assert_eq!(two.throughput, one.throughput);
        assert!(simulate_network(&net, &configs[..2], &traces, SimOptions::default()).is_err());
    }
}
