use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SparsityTrace, WindowPattern};
use crate::error::{Error, Result};
use crate::netspec::LayerSpec;

/// Element-level zero process used by [`generate_synthetic_trace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SparsityModel {
    /// Independent zeros with probability `p_zero[m]` on stream `m`. A single
    /// value applies to every stream.
    IidBernoulli { p_zero: Vec<f64> },
    /// Two-state Markov chain over the row-major element sequence of each
    /// stream, stationary zero probability `p_zero` and mean zero-run length
    /// `burst_length` elements.
    MarkovBursty { p_zero: f64, burst_length: f64 },
    /// Every window has exactly `round(p_zero·K)` zeros at random positions.
    Constant { p_zero: f64 },
}

impl SparsityModel {
    pub fn iid(p_zero: f64) -> Self {
        SparsityModel::IidBernoulli {
            p_zero: vec![p_zero],
        }
    }

    fn validate(&self, streams: usize) -> Result<()> {
        let check = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(
                    "sparsity model",
                    "p_zero",
                    format!("{p} is outside [0, 1]"),
                ))
            }
        };
        match self {
            SparsityModel::IidBernoulli { p_zero } => {
                if p_zero.len() != 1 && p_zero.len() != streams {
                    return Err(Error::LengthMismatch {
                        what: "per-stream p_zero",
                        expected: streams,
                        actual: p_zero.len(),
                    });
                }
                p_zero.iter().try_for_each(|&p| check(p))
            }
            SparsityModel::MarkovBursty {
                p_zero,
                burst_length,
            } => {
                check(*p_zero)?;
                if burst_length.is_nan() || *burst_length < 1.0 {
                    return Err(Error::invalid(
                        "sparsity model",
                        "burst_length",
                        "must be at least 1",
                    ));
                }
                if *p_zero < 1.0 && p_zero / (burst_length * (1.0 - p_zero)) > 1.0 {
                    return Err(Error::invalid(
                        "sparsity model",
                        "burst_length",
                        format!(
                            "must be at least p/(1-p) = {:.3} for p_zero {p_zero}",
                            p_zero / (1.0 - p_zero)
                        ),
                    ));
                }
                Ok(())
            }
            SparsityModel::Constant { p_zero } => check(*p_zero),
        }
    }
}

fn stream_rng(seed: u64, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Generates a deterministic trace of `streams × length` windows for `layer`.
pub fn generate_synthetic_trace(
    layer: &LayerSpec,
    streams: usize,
    length: usize,
    model: &SparsityModel,
    seed: u64,
) -> Result<SparsityTrace> {
    if streams == 0 || length == 0 {
        return Err(Error::invalid(
            format!("synthetic trace for '{}'", layer.name),
            "length",
            "streams and length must be at least 1",
        ));
    }
    model.validate(streams)?;
    let k = layer.kernel_size() as usize;
    let data = (0..streams)
        .map(|m| {
            let mut rng = stream_rng(seed, m);
            match model {
                SparsityModel::IidBernoulli { p_zero } => {
                    let p = if p_zero.len() == 1 {
                        p_zero[0]
                    } else {
                        p_zero[m]
                    };
                    (0..length)
                        .map(|_| bernoulli_window(&mut rng, k, p))
                        .collect()
                }
                SparsityModel::MarkovBursty {
                    p_zero,
                    burst_length,
                } => markov_stream(&mut rng, k, length, *p_zero, *burst_length),
                SparsityModel::Constant { p_zero } => {
                    let zeros = (p_zero * k as f64).round() as usize;
                    (0..length)
                        .map(|_| constant_window(&mut rng, k, zeros))
                        .collect()
                }
            }
        })
        .collect();
    SparsityTrace::new(layer.name.clone(), k, data)
}

fn bernoulli_window(rng: &mut ChaCha8Rng, k: usize, p_zero: f64) -> WindowPattern {
    let mut p = WindowPattern::empty(k);
    for i in 0..k {
        if rng.random::<f64>() >= p_zero {
            p.set(i, true);
        }
    }
    p
}

fn constant_window(rng: &mut ChaCha8Rng, k: usize, zeros: usize) -> WindowPattern {
    let mut p = WindowPattern::dense(k);
    for i in rand::seq::index::sample(rng, k, zeros) {
        p.set(i, false);
    }
    p
}

fn markov_stream(
    rng: &mut ChaCha8Rng,
    k: usize,
    length: usize,
    p_zero: f64,
    burst: f64,
) -> Vec<WindowPattern> {
    let leave_zero = 1.0 / burst;
    let enter_zero = if p_zero >= 1.0 {
        1.0
    } else {
        p_zero / (burst * (1.0 - p_zero))
    };
    let mut zero = rng.random::<f64>() < p_zero;
    (0..length)
        .map(|_| {
            let mut p = WindowPattern::empty(k);
            for i in 0..k {
                if !zero {
                    p.set(i, true);
                }
                let u = rng.random::<f64>();
                zero = if zero {
                    u >= leave_zero
                } else {
                    u < enter_zero
                };
                if p_zero >= 1.0 {
                    zero = true;
                }
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::compute_stats;

    fn layer() -> LayerSpec {
        LayerSpec::new("l", 4, 4, 4, 4, 3, 3)
    }

    #[test]
    fn constant_extremes() {
        let t =
            generate_synthetic_trace(&layer(), 2, 50, &SparsityModel::Constant { p_zero: 1.0 }, 1)
                .unwrap();
        assert!(t.streams().iter().flatten().all(|p| p.nnz() == 0));
        let t = generate_synthetic_trace(&layer(), 2, 50, &SparsityModel::iid(0.0), 1).unwrap();
        assert!(t.streams().iter().flatten().all(|p| p.nnz() == 9));
        let t = generate_synthetic_trace(&layer(), 1, 50, &SparsityModel::iid(1.0), 1).unwrap();
        assert!(t.streams().iter().flatten().all(|p| p.nnz() == 0));
    }

    #[test]
    fn deterministic_for_seed() {
        let m = SparsityModel::MarkovBursty {
            p_zero: 0.6,
            burst_length: 12.0,
        };
        let a = generate_synthetic_trace(&layer(), 3, 200, &m, 42).unwrap();
        let b = generate_synthetic_trace(&layer(), 3, 200, &m, 42).unwrap();
        let c = generate_synthetic_trace(&layer(), 3, 200, &m, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn iid_mean_tracks_p_zero() {
        for p in [0.57, 0.65] {
            let t =
                generate_synthetic_trace(&layer(), 1, 100_000, &SparsityModel::iid(p), 9).unwrap();
            let mean = compute_stats(&t).per_stream_mean[0];
            assert!((mean - p).abs() < 0.01, "p={p} mean={mean}");
        }
    }

    #[test]
    fn bursty_mean_tracks_p_zero() {
        let m = SparsityModel::MarkovBursty {
            p_zero: 0.6,
            burst_length: 20.0,
        };
        let t = generate_synthetic_trace(&layer(), 1, 200_000, &m, 3).unwrap();
        let s = compute_stats(&t);
        assert!((s.per_stream_mean[0] - 0.6).abs() < 0.02, "{s:?}");
        // Bursts make window sparsity far more variable than independent zeros.
        let iid =
            generate_synthetic_trace(&layer(), 1, 200_000, &SparsityModel::iid(0.6), 3).unwrap();
        assert!(s.per_stream_variance[0] > 2.0 * compute_stats(&iid).per_stream_variance[0]);
    }

    #[test]
    fn per_stream_probabilities() {
        let m = SparsityModel::IidBernoulli {
            p_zero: vec![0.0, 1.0],
        };
        let t = generate_synthetic_trace(&layer(), 2, 10, &m, 0).unwrap();
        assert_eq!(compute_stats(&t).per_stream_mean, vec![0.0, 1.0]);
        let bad = SparsityModel::IidBernoulli {
            p_zero: vec![0.1, 0.2, 0.3],
        };
        assert!(generate_synthetic_trace(&layer(), 2, 10, &bad, 0).is_err());
    }

    #[test]
    fn rejects_invalid_probabilities() {
        for m in [
            SparsityModel::iid(1.5),
            SparsityModel::iid(-0.1),
            SparsityModel::Constant { p_zero: 2.0 },
            SparsityModel::MarkovBursty {
                p_zero: 0.9,
                burst_length: 2.0,
            },
            SparsityModel::MarkovBursty {
                p_zero: 0.5,
                burst_length: 0.5,
            },
        ] {
            assert!(
                generate_synthetic_trace(&layer(), 1, 10, &m, 0).is_err(),
                "{m:?}"
            );
        }
    }
}
