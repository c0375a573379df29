//! Exhaustive MAC-allocation oracle for small instances. Shares no code
//! with the library's objective or search: engine means are recomputed by
//! walking the round-robin stream assignment sample by sample.

#![allow(dead_code)]

use pass_core::netspec::{LayerSpec, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleChoice {
    pub n_in: u32,
    pub n_out: u32,
    pub k: u32,
}

fn divisors(n: u32) -> Vec<u32> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Mean sparsity of engine `j` of `n`: engine `j` receives global samples
/// `g = t·n + j`, which come from recorded stream `g mod M`.
fn engine_mean(stream_means: &[f64], n: usize, j: usize) -> f64 {
    let m = stream_means.len();
    let period = n * m;
    let (mut sum, mut count) = (0.0, 0usize);
    let mut g = j;
    while g < period {
        sum += stream_means[g % m];
        count += 1;
        g += n;
    }
    sum / count as f64
}

pub fn oracle_latency(layer: &LayerSpec, stream_means: &[f64], c: OracleChoice) -> f64 {
    let kernel = f64::from(layer.k_x * layer.k_y);
    let worst = (0..c.n_in as usize)
        .map(|j| {
            let s = engine_mean(stream_means, c.n_in as usize, j);
            let cycles = (1.0 - s) * kernel / f64::from(c.k);
            if cycles > 1.0 {
                cycles
            } else {
                1.0
            }
        })
        .fold(0.0, f64::max);
    let windows = layer.h_out * layer.w_out * (layer.c_in / c.n_in) * (layer.c_out / c.n_out);
    f64::from(windows) * worst
}

pub struct OracleResult {
    pub objective: f64,
    pub choices: Vec<OracleChoice>,
}

/// Best `B / max latency` over every legal allocation whose MAC total fits
/// `dsp` and whose unbuffered LUTRAM (`9·N_I` per layer) fits `lutram`.
pub fn exhaustive_optimum(
    net: &NetworkSpec,
    stream_means: &[Vec<f64>],
    dsp: u64,
    lutram: u64,
) -> Option<OracleResult> {
    let options: Vec<Vec<(OracleChoice, f64, u64, u64)>> = net
        .layers
        .iter()
        .zip(stream_means)
        .map(|(l, means)| {
            let mut v = Vec::new();
            for &n_in in &divisors(l.c_in) {
                for &n_out in &divisors(l.c_out) {
                    for k in 1..=l.k_x * l.k_y {
                        let c = OracleChoice { n_in, n_out, k };
                        let cost = u64::from(n_in * n_out * k);
                        v.push((c, oracle_latency(l, means, c), cost, 9 * u64::from(n_in)));
                    }
                }
            }
            v
        })
        .collect();
    let mut best: Option<OracleResult> = None;
    let mut stack = Vec::new();
    search(
        &options,
        0,
        dsp,
        lutram,
        0.0,
        &mut stack,
        &mut best,
        f64::from(net.batch_size),
    );
    best
}

#[allow(clippy::too_many_arguments)]
fn search(
    options: &[Vec<(OracleChoice, f64, u64, u64)>],
    depth: usize,
    dsp_left: u64,
    lut_left: u64,
    worst: f64,
    stack: &mut Vec<OracleChoice>,
    best: &mut Option<OracleResult>,
    batch: f64,
) {
    if depth == options.len() {
        let obj = batch / worst;
        if best.as_ref().is_none_or(|b| obj > b.objective) {
            *best = Some(OracleResult {
                objective: obj,
                choices: stack.clone(),
            });
        }
        return;
    }
    for &(c, lat, cost, lut) in &options[depth] {
        if cost > dsp_left || lut > lut_left {
            continue;
        }
        stack.push(c);
        search(
            options,
            depth + 1,
            dsp_left - cost,
            lut_left - lut,
            worst.max(lat),
            stack,
            best,
            batch,
        );
        stack.pop();
    }
}
