//! Design-space exploration: MAC allocation by simulated annealing and
//! per-layer buffer sizing.
//!
//! The allocator maximises the slowest layer's throughput `min_i B/t̄_i`
//! subject to the DSP and LUTRAM caps. The search state is `(N_I, N_O, k)`
//! per layer with unbuffered FIFOs; buffers are sized afterwards.

mod buffers;

pub use buffers::{
    buffer_lutram_cost, max_depth_within, size_buffers, size_buffers_counts, spearman_correlation,
    BufferSizing,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{estimate_network, total_dsp, total_lutram, ThroughputModel};
use crate::error::{Error, Result};
use crate::netspec::{LayerSpec, NetworkSpec, ResourceBudget};
use crate::pipeline::LayerConfig;
use crate::trace::SparsityStats;

/// A full-network configuration and its predicted performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub configs: Vec<LayerConfig>,
    /// Predicted network throughput, images per cycle.
    pub objective: f64,
    pub dsp_total: u64,
    pub lutram_total: u64,
    pub feasible: bool,
}

impl DesignPoint {
    pub fn evaluate(
        model: ThroughputModel,
        net: &NetworkSpec,
        configs: Vec<LayerConfig>,
        stats: &[SparsityStats],
        budget: &ResourceBudget,
    ) -> Result<Self> {
        let est = estimate_network(model, net, &configs, stats)?;
        let dsp_total = total_dsp(&configs);
        let lutram_total = total_lutram(&configs);
        Ok(DesignPoint {
            objective: est.network_throughput,
            feasible: dsp_total <= budget.dsp && lutram_total <= budget.lutram,
            dsp_total,
            lutram_total,
            configs,
        })
    }
}

/// Geometric cooling schedule. Unset temperatures are calibrated from a
/// 100-move random walk from the start state: the initial temperature
/// accepts 80% of the worsening moves seen on the walk and the minimum
/// is `1e-4` of it. After the first descent the schedule is rerun
/// `reheats` times, each starting again from the best state found so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub initial_temperature: Option<f64>,
    pub cooling_rate: f64,
    pub iterations_per_temperature: u32,
    pub min_temperature: Option<f64>,
    pub reheats: u32,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            initial_temperature: None,
            cooling_rate: 0.97,
            iterations_per_temperature: 100,
            min_temperature: None,
            reheats: 3,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn with_seed(seed: u64) -> Self {
        AnnealSchedule {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>, field| match v {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::invalid(
                "anneal schedule",
                field,
                format!("{t} must be positive"),
            )),
            _ => Ok(()),
        };
        positive(self.initial_temperature, "initial_temperature")?;
        positive(self.min_temperature, "min_temperature")?;
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return Err(Error::invalid(
                "anneal schedule",
                "cooling_rate",
                format!("{} is outside (0, 1)", self.cooling_rate),
            ));
        }
        if self.iterations_per_temperature == 0 {
            return Err(Error::invalid(
                "anneal schedule",
                "iterations_per_temperature",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// One row of the annealing log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iteration: u64,
    pub temperature: f64,
    /// Objective of the current state after the move decision.
    pub objective: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub design: DesignPoint,
    pub log: Vec<ConvergenceRecord>,
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: u32) -> Vec<u32> {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            low.push(d);
            if d * d != n {
                high.push(n / d);
            }
        }
        d += 1;
    }
    low.extend(high.into_iter().rev());
    low
}

/// Per-layer search space with the slowest-engine sparsity precomputed for
/// every legal `N_I`.
struct LayerSpace {
    n_in: Vec<u32>,
    n_out: Vec<u32>,
    k_max: u32,
    k_x: u32,
    k_y: u32,
    h_w: f64,
    c_in: u32,
    c_out: u32,
    /// Lowest engine mean sparsity for each entry of `n_in`.
    slowest_sparsity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Choice {
    i_in: usize,
    i_out: usize,
    k: u32,
}

struct Problem<'a> {
    model: ThroughputModel,
    layers: Vec<LayerSpace>,
    batch: f64,
    budget: &'a ResourceBudget,
}

impl<'a> Problem<'a> {
    fn new(
        model: ThroughputModel,
        net: &NetworkSpec,
        stats: &[SparsityStats],
        budget: &'a ResourceBudget,
    ) -> Result<Self> {
        net.validate()?;
        crate::analytic::check_lengths(net, stats.len(), stats.len())?;
        let layers = net
            .layers
            .iter()
            .zip(stats)
            .map(|(l, s)| {
                if s.num_streams() == 0 {
                    return Err(Error::invalid(
                        format!("stats of layer '{}'", l.name),
                        "streams",
                        "no streams",
                    ));
                }
                let n_in = divisors(l.c_in);
                let slowest_sparsity = n_in
                    .iter()
                    .map(|&n| {
                        s.engine_means(n as usize)
                            .into_iter()
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                Ok(LayerSpace {
                    n_out: divisors(l.c_out),
                    k_max: l.kernel_size(),
                    k_x: l.k_x,
                    k_y: l.k_y,
                    h_w: f64::from(l.h_out) * f64::from(l.w_out),
                    c_in: l.c_in,
                    c_out: l.c_out,
                    slowest_sparsity,
                    n_in,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Problem {
            model,
            layers,
            batch: f64::from(net.batch_size),
            budget,
        })
    }

    fn config(&self, i: usize, c: Choice) -> LayerConfig {
        let s = &self.layers[i];
        LayerConfig::new(s.n_in[c.i_in], s.n_out[c.i_out], c.k, 0)
    }

    fn latency(&self, i: usize, c: Choice) -> f64 {
        let s = &self.layers[i];
        let n_in = s.n_in[c.i_in];
        let n_out = s.n_out[c.i_out];
        let windows = s.h_w * f64::from(s.c_in / n_in) * f64::from(s.c_out / n_out);
        windows
            * self
                .model
                .cycles_per_window(c.k, s.slowest_sparsity[c.i_in], s.k_x, s.k_y)
    }

    fn dsp(&self, i: usize, c: Choice) -> u64 {
        let s = &self.layers[i];
        u64::from(s.n_in[c.i_in]) * u64::from(s.n_out[c.i_out]) * u64::from(c.k)
    }

    fn lutram(&self, i: usize, c: Choice) -> u64 {
        buffer_lutram_cost(0, self.layers[i].n_in[c.i_in])
    }
}

/// Incrementally maintained search state.
#[derive(Clone)]
struct State {
    choices: Vec<Choice>,
    latency: Vec<f64>,
    dsp: u64,
    lutram: u64,
}

impl State {
    fn new(p: &Problem, choices: Vec<Choice>) -> Self {
        let latency = (0..choices.len())
            .map(|i| p.latency(i, choices[i]))
            .collect();
        let dsp = (0..choices.len()).map(|i| p.dsp(i, choices[i])).sum();
        let lutram = (0..choices.len()).map(|i| p.lutram(i, choices[i])).sum();
        State {
            choices,
            latency,
            dsp,
            lutram,
        }
    }

    fn objective(&self, p: &Problem) -> f64 {
        p.batch / self.latency.iter().copied().fold(0.0, f64::max)
    }

    fn feasible(&self, p: &Problem) -> bool {
        self.dsp <= p.budget.dsp && self.lutram <= p.budget.lutram
    }

    fn replace(&mut self, p: &Problem, i: usize, c: Choice) {
        let old = self.choices[i];
        self.dsp = self.dsp - p.dsp(i, old) + p.dsp(i, c);
        self.lutram = self.lutram - p.lutram(i, old) + p.lutram(i, c);
        self.latency[i] = p.latency(i, c);
        self.choices[i] = c;
    }
}

const MINIMAL: Choice = Choice {
    i_in: 0,
    i_out: 0,
    k: 1,
};

/// Adjacent legal value of one variable, moving `up` if possible and the
/// other way at a boundary. `None` when the variable has a single value.
fn neighbour(space: &LayerSpace, c: Choice, var: usize, up: bool) -> Option<Choice> {
    let step = |idx: usize, len: usize| -> Option<usize> {
        match (up, idx) {
            _ if len < 2 => None,
            (true, i) if i + 1 < len => Some(i + 1),
            (true, i) => Some(i - 1),
            (false, 0) => Some(1),
            (false, i) => Some(i - 1),
        }
    };
    let mut n = c;
    match var {
        0 => n.i_in = step(c.i_in, space.n_in.len())?,
        1 => n.i_out = step(c.i_out, space.n_out.len())?,
        _ => n.k = step(c.k as usize - 1, space.k_max as usize)? as u32 + 1,
    }
    Some(n)
}

fn check_minimal(p: &Problem) -> Result<State> {
    let start = State::new(p, vec![MINIMAL; p.layers.len()]);
    if !start.feasible(p) {
        return Err(Error::Infeasible(format!(
            "the minimal design needs {} DSP and {} LUTRAM, budget is {} DSP and {} LUTRAM",
            start.dsp, start.lutram, p.budget.dsp, p.budget.lutram
        )));
    }
    Ok(start)
}

fn greedy(p: &Problem, mut state: State) -> State {
    loop {
        // bottleneck layer, lowest index on ties
        let mut worst = 0;
        for i in 1..state.latency.len() {
            if state.latency[i] > state.latency[worst] {
                worst = i;
            }
        }
        let cur = state.choices[worst];
        let mut best: Option<(u64, Choice)> = None;
        for var in 0..3 {
            let up = match var {
                0 => (cur.i_in + 1 < p.layers[worst].n_in.len()).then(|| Choice {
                    i_in: cur.i_in + 1,
                    ..cur
                }),
                1 => (cur.i_out + 1 < p.layers[worst].n_out.len()).then(|| Choice {
                    i_out: cur.i_out + 1,
                    ..cur
                }),
                _ => (cur.k < p.layers[worst].k_max).then(|| Choice {
                    k: cur.k + 1,
                    ..cur
                }),
            };
            let Some(cand) = up else { continue };
            if p.latency(worst, cand) >= state.latency[worst] {
                continue;
            }
            let mut trial = state.clone();
            trial.replace(p, worst, cand);
            if !trial.feasible(p) {
                continue;
            }
            let extra = trial.dsp - state.dsp.min(trial.dsp);
            if best.is_none_or(|(e, _)| extra < e) {
                best = Some((extra, cand));
            }
        }
        match best {
            Some((_, cand)) => state.replace(p, worst, cand),
            None => return state,
        }
    }
}

fn to_design(
    p: &Problem,
    net: &NetworkSpec,
    stats: &[SparsityStats],
    state: &State,
) -> Result<DesignPoint> {
    let configs = (0..state.choices.len())
        .map(|i| p.config(i, state.choices[i]))
        .collect();
    DesignPoint::evaluate(p.model, net, configs, stats, p.budget)
}

/// Greedy baseline: from the all-ones design, repeatedly give the
/// bottleneck layer the cheapest single-variable upgrade (in DSP) that
/// lowers its latency and stays within budget, until none exists.
pub fn greedy_allocation(
    model: ThroughputModel,
    net: &NetworkSpec,
    stats: &[SparsityStats],
    budget: &ResourceBudget,
) -> Result<DesignPoint> {
    let p = Problem::new(model, net, stats, budget)?;
    let start = check_minimal(&p)?;
    to_design(&p, net, stats, &greedy(&p, start))
}

/// Cheapest allocation meeting the tightest common latency target: every
/// layer takes its lowest-DSP choice (then lowest LUTRAM) whose latency is
/// within the target, and the target is the smallest one that fits.
fn balanced(p: &Problem) -> Option<State> {
    let options: Vec<Vec<(f64, u64, u64, Choice)>> = (0..p.layers.len())
        .map(|i| {
            let s = &p.layers[i];
            let mut v = Vec::new();
            for i_in in 0..s.n_in.len() {
                for i_out in 0..s.n_out.len() {
                    for k in 1..=s.k_max {
                        let c = Choice { i_in, i_out, k };
                        v.push((p.latency(i, c), p.dsp(i, c), p.lutram(i, c), c));
                    }
                }
            }
            v
        })
        .collect();
    let pick = |target: f64| -> Vec<Choice> {
        options
            .iter()
            .map(|v| {
                v.iter()
                    .filter(|o| o.0 <= target)
                    .min_by_key(|o| (o.1, o.2))
                    .map(|o| o.3)
                    .unwrap_or(MINIMAL)
            })
            .collect()
    };
    let mut targets: Vec<f64> = options.iter().flatten().map(|o| o.0).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    // Slowest admissible target over all layers.
    let floor = options
        .iter()
        .map(|v| v.iter().map(|o| o.0).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let first = targets.partition_point(|&t| t < floor);
    // Total DSP of the cheapest picks only falls as the target loosens.
    let dsp_fits = |t: f64| {
        let c = pick(t);
        (0..c.len()).map(|i| p.dsp(i, c[i])).sum::<u64>() <= p.budget.dsp
    };
    let (mut lo, mut hi) = (first, targets.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if dsp_fits(targets[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    targets[lo..]
        .iter()
        .map(|&t| State::new(p, pick(t)))
        .find(|s| s.feasible(p))
}

/// Simulated-annealing MAC allocation with the linear throughput model.
pub fn allocate_macs(
    net: &NetworkSpec,
    stats: &[SparsityStats],
    budget: &ResourceBudget,
    schedule: &AnnealSchedule,
) -> Result<DesignPoint> {
    Ok(anneal(ThroughputModel::Linear, net, stats, budget, schedule)?.design)
}

/// Simulated annealing over `(N_I, N_O, k)` per layer, warm-started from
/// the greedy baseline. Returns the best feasible design seen and the
/// per-iteration log.
pub fn anneal(
    model: ThroughputModel,
    net: &NetworkSpec,
    stats: &[SparsityStats],
    budget: &ResourceBudget,
    schedule: &AnnealSchedule,
) -> Result<AnnealOutcome> {
    schedule.validate()?;
    let p = Problem::new(model, net, stats, budget)?;
    let start = {
        let greedy = greedy(&p, check_minimal(&p)?);
        match balanced(&p) {
            Some(b) if b.objective(&p) > greedy.objective(&p) => b,
            _ => greedy,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let layers = p.layers.len();

    let propose = |rng: &mut ChaCha8Rng, state: &State| -> Option<(usize, Choice)> {
        let i = rng.random_range(0..layers);
        let var = rng.random_range(0..3);
        let up = rng.random_bool(0.5);
        neighbour(&p.layers[i], state.choices[i], var, up).map(|c| (i, c))
    };

    let t0 = match schedule.initial_temperature {
        Some(t) => t,
        None => {
            // Random walk over feasible neighbours; a probe that only looks
            // at the start state underestimates barriers on flat plateaus.
            let mut walk = start.clone();
            let mut walk_obj = walk.objective(&p);
            let mut worse = Vec::new();
            for _ in 0..100 {
                if let Some((i, c)) = propose(&mut rng, &walk) {
                    let old = walk.choices[i];
                    walk.replace(&p, i, c);
                    if walk.feasible(&p) {
                        let obj = walk.objective(&p);
                        if obj < walk_obj {
                            worse.push(walk_obj - obj);
                        }
                        walk_obj = obj;
                    } else {
                        walk.replace(&p, i, old);
                    }
                }
            }
            if worse.is_empty() {
                // No worsening move anywhere nearby: any scale will do.
                1e-3 * start.objective(&p)
            } else {
                acceptance_temperature(&worse, 0.8)
            }
        }
    };
    let t_min = schedule.min_temperature.unwrap_or(1e-4 * t0);

    let mut current = start.clone();
    let mut current_obj = current.objective(&p);
    let mut best = current.clone();
    let mut best_obj = current_obj;
    let mut log = Vec::new();
    let mut iteration = 0u64;
    for _ in 0..=schedule.reheats {
        current = best.clone();
        current_obj = best_obj;
        let mut temp = t0;
        while temp >= t_min {
            for _ in 0..schedule.iterations_per_temperature {
                let mut accepted = false;
                if let Some((i, c)) = propose(&mut rng, &current) {
                    let old = current.choices[i];
                    current.replace(&p, i, c);
                    if current.feasible(&p) {
                        let obj = current.objective(&p);
                        let delta = obj - current_obj;
                        accepted = delta >= 0.0 || rng.random::<f64>() < (delta / temp).exp();
                        if accepted {
                            current_obj = obj;
                            if obj > best_obj {
                                best_obj = obj;
                                best = current.clone();
                            }
                        }
                    }
                    if !accepted {
                        current.replace(&p, i, old);
                    }
                }
                log.push(ConvergenceRecord {
                    iteration,
                    temperature: temp,
                    objective: current_obj,
                    accepted,
                });
                iteration += 1;
            }
            temp *= schedule.cooling_rate;
        }
    }
    Ok(AnnealOutcome {
        design: to_design(&p, net, stats, &best)?,
        log,
    })
}

/// Temperature at which the mean Metropolis acceptance of the worsening
/// steps `deltas` equals `target`.
fn acceptance_temperature(deltas: &[f64], target: f64) -> f64 {
    let rate = |t: f64| deltas.iter().map(|d| (-d / t).exp()).sum::<f64>() / deltas.len() as f64;
    let (mut lo, mut hi) = (
        f64::MIN_POSITIVE,
        deltas.iter().copied().fold(0.0, f64::max),
    );
    while rate(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Splits a LUTRAM budget across layers in proportion to their stream
/// counts `N_I`, rounding down.
pub fn split_lutram(budget: u64, configs: &[LayerConfig]) -> Vec<u64> {
    let total: u64 = configs.iter().map(|c| u64::from(c.n_in)).sum();
    configs
        .iter()
        .map(|c| (u128::from(budget) * u128::from(c.n_in) / u128::from(total.max(1))) as u64)
        .collect()
}

/// Per-layer line of a design document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesign {
    pub shape: LayerSpec,
    pub n_in: u32,
    pub n_out: u32,
    pub k: u32,
    pub w: u32,
    /// Predicted latency `t̄` in cycles.
    pub latency_cycles: f64,
    pub theta_min: f64,
    pub dsp: u64,
    pub lutram: u64,
}

/// Structured description of a final design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub batch_size: u32,
    /// Predicted images per cycle.
    pub network_throughput: f64,
    pub dsp_total: u64,
    pub lutram_total: u64,
    pub budget: ResourceBudget,
    pub feasible: bool,
    pub dense_mode: bool,
    pub layers: Vec<LayerDesign>,
}

impl DesignDocument {
    pub fn configs(&self) -> Vec<LayerConfig> {
        self.layers
            .iter()
            .map(|l| LayerConfig::new(l.n_in, l.n_out, l.k, l.w))
            .collect()
    }

    pub fn network(&self) -> NetworkSpec {
        NetworkSpec {
            batch_size: self.batch_size,
            layers: self.layers.iter().map(|l| l.shape.clone()).collect(),
        }
    }
}

pub fn design_document(
    model: ThroughputModel,
    net: &NetworkSpec,
    design: &DesignPoint,
    stats: &[SparsityStats],
    budget: &ResourceBudget,
    dense_mode: bool,
) -> Result<DesignDocument> {
    let est = estimate_network(model, net, &design.configs, stats)?;
    let layers = net
        .layers
        .iter()
        .zip(&design.configs)
        .zip(&est.layers)
        .map(|((l, c), e)| LayerDesign {
            shape: l.clone(),
            n_in: c.n_in,
            n_out: c.n_out,
            k: c.k,
            w: c.buffer_depth,
            latency_cycles: e.latency_cycles,
            theta_min: e.theta_min,
            dsp: e.dsp,
            lutram: buffer_lutram_cost(c.buffer_depth, c.n_in),
        })
        .collect();
    Ok(DesignDocument {
        batch_size: net.batch_size,
        network_throughput: est.network_throughput,
        dsp_total: design.dsp_total,
        lutram_total: design.lutram_total,
        budget: *budget,
        feasible: design.feasible,
        dense_mode,
        layers,
    })
}
