//! Activation sparsity traces and the statistics derived from them.
//!
//! A trace holds, for each of `M` parallel input streams, the sequence of
//! kernel-window non-zero masks seen by the engine on that stream. All
//! statistics are computed from per-window zero counts in integer arithmetic
//! and divided only at the end, so equal rationals give bit-equal floats
//! (a constant trace has a back-pressure metric of exactly zero).

mod io;
mod pattern;
mod synth;

pub use io::{
    decode_trace_binary, encode_trace_binary, load_trace, read_trace_binary, read_trace_csv,
    trace_from_csv, trace_to_csv, write_trace_binary, write_trace_csv, TRACE_MAGIC, TRACE_VERSION,
};
pub use pattern::WindowPattern;
pub use synth::{generate_synthetic_trace, SparsityModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-stream sequences of window masks for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityTrace {
    layer: String,
    window_len: usize,
    streams: Vec<Vec<WindowPattern>>,
}

impl SparsityTrace {
    pub fn new(
        layer: impl Into<String>,
        window_len: usize,
        streams: Vec<Vec<WindowPattern>>,
    ) -> Result<Self> {
        let layer = layer.into();
        if window_len == 0 {
            return Err(Error::invalid(
                format!("trace '{layer}'"),
                "window_len",
                "must be at least 1",
            ));
        }
        if streams.is_empty() {
            return Err(Error::invalid(
                format!("trace '{layer}'"),
                "streams",
                "at least one stream is required",
            ));
        }
        let len = streams[0].len();
        if len == 0 {
            return Err(Error::invalid(
                format!("trace '{layer}'"),
                "length",
                "trace is empty",
            ));
        }
        for (m, s) in streams.iter().enumerate() {
            if s.len() != len {
                return Err(Error::invalid(
                    format!("trace '{layer}' stream {m}"),
                    "length",
                    format!("expected {len} windows, got {}", s.len()),
                ));
            }
            if let Some(p) = s.iter().find(|p| p.len() != window_len) {
                return Err(Error::invalid(
                    format!("trace '{layer}' stream {m}"),
                    "mask",
                    format!("pattern length {} != window length {window_len}", p.len()),
                ));
            }
        }
        Ok(SparsityTrace {
            layer,
            window_len,
            streams,
        })
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn set_layer(&mut self, name: impl Into<String>) {
        self.layer = name.into();
    }

    /// `K_x·K_y` of the owning layer.
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    /// Windows per stream (`T`).
    pub fn len(&self) -> usize {
        self.streams[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stream(&self, m: usize) -> &[WindowPattern] {
        &self.streams[m]
    }

    pub fn streams(&self) -> &[Vec<WindowPattern>] {
        &self.streams
    }

    pub fn pattern(&self, m: usize, t: usize) -> Result<&WindowPattern> {
        let s = self.streams.get(m).ok_or(Error::OutOfRange {
            what: "stream",
            index: m,
            len: self.num_streams(),
        })?;
        s.get(t).ok_or(Error::OutOfRange {
            what: "window",
            index: t,
            len: s.len(),
        })
    }

    pub fn zero_counts(&self) -> ZeroCounts {
        ZeroCounts::from_trace(self)
    }

    /// Maps this trace onto `n` engine streams.
    ///
    /// The `M·T` recorded windows are visited round-robin: engine `j` takes
    /// global sample `g = t·n + j`, i.e. trace stream `g mod M` at time
    /// `(g / M) mod T`. With `n == M` this is the identity; with fewer
    /// engines each one cycles through several recorded streams, as when one
    /// engine folds several input channels. The result has
    /// `max(1, M·T / n)` windows per stream.
    pub fn restream(&self, n: usize) -> SparsityTrace {
        assert!(n > 0, "restream to zero streams");
        let m = self.num_streams();
        if n == m {
            return self.clone();
        }
        let t_len = self.len();
        let out_len = (m * t_len / n).max(1);
        let streams = (0..n)
            .map(|j| {
                (0..out_len)
                    .map(|t| {
                        let g = t * n + j;
                        self.streams[g % m][(g / m) % t_len].clone()
                    })
                    .collect()
            })
            .collect();
        SparsityTrace {
            layer: self.layer.clone(),
            window_len: self.window_len,
            streams,
        }
    }
}

/// Per-window zero counts of a trace, the form every statistic works on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroCounts {
    window_len: usize,
    counts: Vec<Vec<u16>>,
}

impl ZeroCounts {
    pub fn from_trace(trace: &SparsityTrace) -> Self {
        ZeroCounts {
            window_len: trace.window_len,
            counts: trace
                .streams
                .iter()
                .map(|s| s.iter().map(|p| p.zero_count() as u16).collect())
                .collect(),
        }
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn num_streams(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stream(&self, m: usize) -> &[u16] {
        &self.counts[m]
    }

    fn total(&self, m: usize) -> u64 {
        self.counts[m].iter().map(|&z| u64::from(z)).sum()
    }

    pub fn stats(&self) -> SparsityStats {
        let t = self.len() as u64;
        let k = self.window_len as f64;
        let mut per_stream_mean = Vec::with_capacity(self.num_streams());
        let mut per_stream_variance = Vec::with_capacity(self.num_streams());
        let mut grand = 0u64;
        for m in 0..self.num_streams() {
            let total = self.total(m);
            grand += total;
            per_stream_mean.push(total as f64 / (t as f64 * k));
            // Two-pass population variance in zero-count units.
            let mean_z = total as f64 / t as f64;
            let ss: f64 = self.counts[m]
                .iter()
                .map(|&z| {
                    let d = f64::from(z) - mean_z;
                    d * d
                })
                .sum();
            per_stream_variance.push(ss / t as f64 / (k * k));
        }
        SparsityStats {
            per_stream_mean,
            per_stream_variance,
            global_mean: grand as f64 / ((t * self.num_streams() as u64) as f64 * k),
        }
    }

    pub fn moving_average(&self, m: usize, w: usize) -> Result<Vec<f64>> {
        if m >= self.num_streams() {
            return Err(Error::OutOfRange {
                what: "stream",
                index: m,
                len: self.num_streams(),
            });
        }
        self.check_window(w)?;
        let denom = (w * self.window_len) as f64;
        let s = &self.counts[m];
        let mut sum: u64 = s[..w].iter().map(|&z| u64::from(z)).sum();
        let mut out = Vec::with_capacity(self.len() - w + 1);
        out.push(sum as f64 / denom);
        for j in 1..=self.len() - w {
            sum = sum + u64::from(s[j + w - 1]) - u64::from(s[j - 1]);
            out.push(sum as f64 / denom);
        }
        Ok(out)
    }

    fn check_window(&self, w: usize) -> Result<()> {
        if w == 0 {
            return Err(Error::invalid(
                "moving average",
                "w",
                "window must be at least 1",
            ));
        }
        if w > self.len() {
            return Err(Error::invalid(
                "moving average",
                "w",
                format!("window {w} exceeds trace length {}", self.len()),
            ));
        }
        Ok(())
    }

    pub fn back_pressure_metric(&self, w: usize) -> Result<f64> {
        if self.num_streams() < 2 {
            return Err(Error::invalid(
                "back-pressure metric",
                "streams",
                format!("needs at least 2 streams, trace has {}", self.num_streams()),
            ));
        }
        self.check_window(w)?;
        let n = self.len() - w + 1;
        let mut sums: Vec<u64> = self
            .counts
            .iter()
            .map(|s| s[..w].iter().map(|&z| u64::from(z)).sum())
            .collect();
        let spread = |sums: &[u64]| {
            let (lo, hi) = sums
                .iter()
                .fold((u64::MAX, 0u64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo
        };
        let mut gap_total: u64 = spread(&sums);
        for j in 1..n {
            for (sum, s) in sums.iter_mut().zip(&self.counts) {
                *sum = *sum + u64::from(s[j + w - 1]) - u64::from(s[j - 1]);
            }
            gap_total += spread(&sums);
        }
        let totals: Vec<u64> = (0..self.num_streams()).map(|m| self.total(m)).collect();
        let mean_gap = gap_total as f64 / (n as f64 * (w * self.window_len) as f64);
        let unbalance = spread(&totals) as f64 / (self.len() as f64 * self.window_len as f64);
        Ok(mean_gap - unbalance)
    }
}

/// Summary statistics of a trace's instantaneous sparsity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub per_stream_mean: Vec<f64>,
    /// Population variance of the per-window sparsity.
    pub per_stream_variance: Vec<f64>,
    pub global_mean: f64,
}

impl SparsityStats {
    /// Stats for `streams` streams all at mean sparsity `mean`, zero variance.
    pub fn uniform(mean: f64, streams: usize) -> Self {
        SparsityStats {
            per_stream_mean: vec![mean; streams],
            per_stream_variance: vec![0.0; streams],
            global_mean: mean,
        }
    }

    pub fn num_streams(&self) -> usize {
        self.per_stream_mean.len()
    }

    /// Mean sparsity seen by each of `n` engines under the round-robin
    /// mapping of [`SparsityTrace::restream`]: engine `j` cycles through the
    /// recorded streams congruent to `j` modulo `gcd(n, M)`.
    pub fn engine_means(&self, n: usize) -> Vec<f64> {
        let m = self.num_streams();
        if n == m {
            return self.per_stream_mean.clone();
        }
        let g = gcd(n, m);
        let class_means: Vec<f64> = (0..g)
            .map(|r| {
                let members: Vec<f64> = self
                    .per_stream_mean
                    .iter()
                    .skip(r)
                    .step_by(g)
                    .copied()
                    .collect();
                members.iter().sum::<f64>() / members.len() as f64
            })
            .collect();
        (0..n).map(|j| class_means[j % g]).collect()
    }

    /// The same stats with sparsity forced to zero, as seen by an engine
    /// that does not skip zeros.
    pub fn dense_equivalent(&self) -> Self {
        SparsityStats::uniform(0.0, self.num_streams())
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zero fraction of window `t` on stream `stream`.
pub fn instantaneous_sparsity(trace: &SparsityTrace, stream: usize, t: usize) -> Result<f64> {
    let p = trace.pattern(stream, t)?;
    Ok(f64::from(p.zero_count()) / p.len() as f64)
}

pub fn compute_stats(trace: &SparsityTrace) -> SparsityStats {
    trace.zero_counts().stats()
}

/// Moving average of stream sparsity over `w` consecutive windows
/// (`j..j+w`), one value per start position `0..=T-w`.
pub fn moving_average(trace: &SparsityTrace, stream: usize, w: usize) -> Result<Vec<f64>> {
    trace.zero_counts().moving_average(stream, w)
}

/// Mean spread between the most and least sparse stream's moving average,
/// less the spread of the stream means. Signed, not clamped.
pub fn back_pressure_metric(trace: &SparsityTrace, w: usize) -> Result<f64> {
    trace.zero_counts().back_pressure_metric(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(s: &str) -> WindowPattern {
        WindowPattern::from_mask_str(s).unwrap()
    }

    fn trace_of(streams: &[&[&str]]) -> SparsityTrace {
        let k = streams[0][0].len();
        SparsityTrace::new(
            "t",
            k,
            streams
                .iter()
                .map(|s| s.iter().map(|m| pat(m)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn instantaneous_examples() {
        let t = trace_of(&[&["000000000", "111111111", "111000000"]]);
        assert_eq!(instantaneous_sparsity(&t, 0, 0).unwrap(), 1.0);
        assert_eq!(instantaneous_sparsity(&t, 0, 1).unwrap(), 0.0);
        assert!((instantaneous_sparsity(&t, 0, 2).unwrap() - 6.0 / 9.0).abs() < 1e-12);
        assert!(matches!(
            instantaneous_sparsity(&t, 1, 0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            instantaneous_sparsity(&t, 0, 3),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn alternating_stream_stats() {
        let t = trace_of(&[&["000000000", "111111111", "000000000", "111111111"]]);
        let s = compute_stats(&t);
        assert_eq!(s.per_stream_mean, vec![0.5]);
        assert_eq!(s.per_stream_variance, vec![0.25]);
        assert_eq!(s.global_mean, 0.5);
    }

    #[test]
    fn constant_stream_has_zero_variance() {
        // 13 zeros of 20 elements: s = 0.65 exactly as a rational.
        let mask = "11111110000000000000";
        let t = trace_of(&[&[mask; 7]]);
        let s = compute_stats(&t);
        assert_eq!(s.per_stream_mean[0], 13.0 / 20.0);
        assert_eq!(s.per_stream_variance[0], 0.0);
    }

    #[test]
    fn moving_average_examples() {
        let t = trace_of(&[&["0", "1", "0", "1"]]);
        assert_eq!(moving_average(&t, 0, 2).unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(moving_average(&t, 0, 1).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            moving_average(&t, 0, 4).unwrap(),
            vec![compute_stats(&t).per_stream_mean[0]]
        );
        assert!(moving_average(&t, 0, 5).is_err());
        assert!(moving_average(&t, 0, 0).is_err());
    }

    #[test]
    fn back_pressure_of_constant_and_identical_streams() {
        let a = "111111100";
        let b = "110000000";
        let t = trace_of(&[&[a; 6], &[b; 6]]);
        for w in 1..=6 {
            assert_eq!(back_pressure_metric(&t, w).unwrap(), 0.0);
        }
        let s = ["111000000", "000000000", "111111111", "100000000"];
        let t = trace_of(&[&s, &s]);
        for w in 1..=4 {
            assert_eq!(back_pressure_metric(&t, w).unwrap(), 0.0);
        }
    }

    #[test]
    fn back_pressure_needs_two_streams() {
        let t = trace_of(&[&["1", "0"]]);
        assert!(back_pressure_metric(&t, 1).is_err());
        let t = trace_of(&[&["1", "0"], &["0", "1"]]);
        assert!(back_pressure_metric(&t, 3).is_err());
        // Anti-phase streams: spread 1 at w=1, 0 at w=2.
        assert_eq!(back_pressure_metric(&t, 1).unwrap(), 1.0);
        assert_eq!(back_pressure_metric(&t, 2).unwrap(), 0.0);
    }

    #[test]
    fn rejects_ragged_traces() {
        let r = SparsityTrace::new("x", 1, vec![vec![pat("1")], vec![pat("1"), pat("0")]]);
        assert!(r.is_err());
        assert!(SparsityTrace::new("x", 1, vec![vec![]]).is_err());
        assert!(SparsityTrace::new("x", 2, vec![vec![pat("1")]]).is_err());
    }

    #[test]
    fn restream_identity_and_round_robin() {
        let t = trace_of(&[&["0", "0", "0"], &["1", "1", "1"]]);
        assert_eq!(t.restream(2), t);
        // One engine alternates between the two recorded streams.
        let one = t.restream(1);
        assert_eq!(one.num_streams(), 1);
        assert_eq!(one.len(), 6);
        assert_eq!(compute_stats(&one).per_stream_mean, vec![0.5]);
        let four = t.restream(4);
        assert_eq!(four.num_streams(), 4);
        let means = compute_stats(&four).per_stream_mean;
        assert_eq!(means, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(compute_stats(&t).engine_means(4), means);
    }

    #[test]
    fn engine_means_by_residue_class() {
        let s = SparsityStats {
            per_stream_mean: vec![0.1, 0.2, 0.3, 0.4],
            per_stream_variance: vec![0.0; 4],
            global_mean: 0.25,
        };
        let two = s.engine_means(2);
        assert!((two[0] - 0.2).abs() < 1e-12 && (two[1] - 0.3).abs() < 1e-12);
        let three = s.engine_means(3);
        assert!(three.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
}
