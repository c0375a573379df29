//! Input-buffer depth selection from the back-pressure metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{SparsityTrace, ZeroCounts};

/// LUTRAM used by `streams` input buffers of depth `w` windows: a fixed
/// handshake cost plus one step per 32 windows, 9 units per stream each.
/// For 32 streams this is the staircase 288, 576, 864, … at w = 0, 1..=32,
/// 33..=64, ….
pub fn buffer_lutram_cost(w: u32, streams: u32) -> u64 {
    9 * u64::from(streams) * (1 + u64::from(w.div_ceil(32)))
}

/// Largest depth whose cost for `streams` buffers fits `cap`, or `None` if
/// not even the unbuffered handshake fits.
pub fn max_depth_within(cap: u64, streams: u32) -> Option<u32> {
    let per_step = 9 * u64::from(streams.max(1));
    let steps = cap / per_step;
    if steps == 0 {
        None
    } else {
        Some(((steps - 1).min(u64::from(u32::MAX / 32))) as u32 * 32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSizing {
    pub depth: u32,
    /// `(w, ρ_w)` for every depth evaluated by the sweep.
    pub rho: Vec<(u32, f64)>,
    /// The requested `w_max` needed windows beyond the trace and was lowered.
    pub w_max_reduced: bool,
    /// Even the smallest swept depth did not fit the LUTRAM cap.
    pub cap_exceeded: bool,
}

/// Picks the smallest `w` in `{2, 4, …, w_max}` where doubling the buffer
/// stops paying off, `(ρ_w − ρ_2w) / max(ρ_2, 1e-6) < epsilon`, then clips
/// it to the LUTRAM cap. Traces with a single stream need no buffer (there
/// is nothing to synchronise) and get depth 0.
pub fn size_buffers(
    trace: &SparsityTrace,
    lutram_cap: u64,
    epsilon: f64,
    w_max: u32,
) -> Result<BufferSizing> {
    size_buffers_counts(&trace.zero_counts(), lutram_cap, epsilon, w_max)
}

pub fn size_buffers_counts(
    counts: &ZeroCounts,
    lutram_cap: u64,
    epsilon: f64,
    w_max: u32,
) -> Result<BufferSizing> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(
            "buffer sizing",
            "epsilon",
            format!("{epsilon} must be positive"),
        ));
    }
    if w_max < 2 {
        return Err(Error::invalid(
            "buffer sizing",
            "w_max",
            format!("{w_max} must be at least 2"),
        ));
    }
    let streams = counts.num_streams() as u32;
    if streams < 2 {
        return Ok(BufferSizing {
            depth: 0,
            rho: Vec::new(),
            w_max_reduced: false,
            cap_exceeded: buffer_lutram_cost(0, streams) > lutram_cap,
        });
    }
    let len = counts.len() as u64;
    if len < 4 {
        return Err(Error::invalid(
            "buffer sizing",
            "trace",
            format!("{len} windows per stream is too short for the smallest sweep (4 needed)"),
        ));
    }
    // The stopping test at w reads ρ_2w, so 2w must fit in the trace.
    let mut top = w_max;
    let mut w_max_reduced = false;
    while 2 * u64::from(top) > len {
        top /= 2;
        w_max_reduced = true;
    }

    let mut rho = Vec::new();
    let mut rho_at = |w: u32| -> Result<f64> {
        if let Some(&(_, r)) = rho.iter().find(|(x, _)| *x == w) {
            return Ok(r);
        }
        let r = counts.back_pressure_metric(w as usize)?;
        rho.push((w, r));
        Ok(r)
    };
    let rho_2 = rho_at(2)?;
    let guard = rho_2.max(1e-6);
    let mut w = 2u32;
    let stop = loop {
        let gain = (rho_at(w)? - rho_at(2 * w)?) / guard;
        if gain < epsilon || 2 * w > top {
            break w.min(top);
        }
        w *= 2;
    };

    let (depth, cap_exceeded) = match max_depth_within(lutram_cap, streams) {
        Some(fit) if fit >= 2 => (stop.min(fit), false),
        _ => (0, true),
    };
    rho.sort_by_key(|&(w, _)| w);
    Ok(BufferSizing {
        depth,
        rho,
        w_max_reduced,
        cap_exceeded,
    })
}

/// Spearman rank correlation with average ranks for ties. Returns `None`
/// when either side is constant or fewer than two points are given.
pub fn spearman_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "paired samples");
    if a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean).powi(2);
        vb += (y - mean).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::LayerSpec;
    use crate::trace::{generate_synthetic_trace, SparsityModel};
    use proptest::prelude::*;

    fn layer() -> LayerSpec {
        LayerSpec::new("l", 8, 8, 8, 8, 3, 3)
    }

    #[test]
    fn lutram_staircase() {
        assert_eq!(buffer_lutram_cost(0, 32), 288);
        assert_eq!(buffer_lutram_cost(1, 32), 576);
        assert_eq!(buffer_lutram_cost(32, 32), 576);
        assert_eq!(buffer_lutram_cost(33, 32), 864);
        assert_eq!(buffer_lutram_cost(64, 32), 864);
        assert_eq!(buffer_lutram_cost(128, 32), 1440);
        assert_eq!(buffer_lutram_cost(32, 16), 288);
        assert_eq!(max_depth_within(576, 32), Some(32));
        assert_eq!(max_depth_within(575, 32), Some(0));
        assert_eq!(max_depth_within(287, 32), None);
    }

    #[test]
    fn constant_streams_stop_at_two() {
        let t = generate_synthetic_trace(
            &layer(),
            4,
            1000,
            &SparsityModel::Constant { p_zero: 0.5 },
            1,
        )
        .unwrap();
        let s = size_buffers(&t, u64::MAX, 0.1, 256).unwrap();
        assert_eq!(s.depth, 2);
        assert!(!s.cap_exceeded && !s.w_max_reduced);
        assert!(s.rho.iter().all(|&(_, r)| r == 0.0));
    }

    #[test]
    fn tiny_cap_gives_zero_depth() {
        let t = generate_synthetic_trace(&layer(), 4, 500, &SparsityModel::iid(0.5), 1).unwrap();
        let s = size_buffers(&t, buffer_lutram_cost(2, 4) - 1, 0.1, 64).unwrap();
        assert_eq!(s.depth, 0);
        assert!(s.cap_exceeded);
    }

    #[test]
    fn cap_clips_depth() {
        let t = generate_synthetic_trace(&layer(), 8, 4000, &SparsityModel::iid(0.57), 5).unwrap();
        let free = size_buffers(&t, u64::MAX, 0.01, 512).unwrap();
        assert!(free.depth > 32, "{free:?}");
        let capped = size_buffers(&t, buffer_lutram_cost(32, 8), 0.01, 512).unwrap();
        assert_eq!(capped.depth, 32);
        assert!(!capped.cap_exceeded);
    }

    #[test]
    fn short_trace_lowers_w_max() {
        let t = generate_synthetic_trace(&layer(), 4, 100, &SparsityModel::iid(0.5), 2).unwrap();
        let s = size_buffers(&t, u64::MAX, 1e-9, 256).unwrap();
        assert!(s.w_max_reduced);
        assert!(s.depth <= 32);
        assert!(size_buffers(&t, u64::MAX, 0.0, 256).is_err());
        assert!(size_buffers(&t, u64::MAX, 0.1, 1).is_err());
    }

    #[test]
    fn single_stream_needs_no_buffer() {
        let t = generate_synthetic_trace(&layer(), 1, 100, &SparsityModel::iid(0.5), 2).unwrap();
        assert_eq!(size_buffers(&t, u64::MAX, 0.1, 64).unwrap().depth, 0);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(
            spearman_correlation(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]),
            Some(1.0)
        );
        assert_eq!(
            spearman_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]),
            Some(-1.0)
        );
        assert_eq!(spearman_correlation(&[1.0, 1.0], &[1.0, 2.0]), None);
        let r = spearman_correlation(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn smaller_epsilon_never_shrinks_depth(seed in any::<u64>(), p in 0.2f64..0.8, cap in 100u64..4000) {
            let t = generate_synthetic_trace(&layer(), 4, 600, &SparsityModel::iid(p), seed).unwrap();
            let mut prev = 0;
            for eps in [0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
                let d = size_buffers(&t, cap, eps, 256).unwrap().depth;
                prop_assert!(d >= prev);
                prev = d;
            }
        }
    }
}
