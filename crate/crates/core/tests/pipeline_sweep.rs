use pass_core::analytic::folded_windows;
use pass_core::netspec::{presets, LayerSpec};
use pass_core::pipeline::{simulate_buffer_sweep, simulate_layer, LayerConfig};
use pass_core::trace::{generate_synthetic_trace, SparsityModel};
use proptest::prelude::*;

#[test]
fn residual_stage_buffer_sweep() {
    let layer = presets::resnet18_layer2();
    let cfg = LayerConfig::new(32, 64, 1, 0);
    let t = folded_windows(&layer, &cfg) as usize;
    let trace = generate_synthetic_trace(&layer, 32, t, &SparsityModel::iid(0.57), 12).unwrap();
    let depths = [2, 4, 8, 16, 32, 64, 128, 256];
    let reports = simulate_buffer_sweep(&layer, &cfg, &trace, &depths).unwrap();
    for (pair, w) in reports.windows(2).zip(&depths[1..]) {
        let (a, b) = (&pair[0], &pair[1]);
        assert!(b.overhead_fraction <= a.overhead_fraction, "w={w}");
        // Strict while synchronisation stalls remain; then the floor is
        // the per-window rounding of the engines themselves.
        if a.stall_cycles > 0 {
            assert!(b.overhead_fraction < a.overhead_fraction, "w={w}");
        }
    }
    for (r, w) in reports.iter().zip(depths) {
        if w >= 64 {
            assert!(r.overhead_fraction < 0.05, "w={w}: {}", r.overhead_fraction);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measured_cycles_bounded_below_by_busiest_engine(
        seed in any::<u64>(), p in 0.0f64..1.0, k in 1u32..=9, w in 0u32..20, n_in in 1u32..6, len in 1usize..80,
    ) {
        let layer = LayerSpec::new("l", n_in, 3, 3, 5, 3, 3);
        let cfg = LayerConfig::new(n_in, 1, k, w);
        let trace = generate_synthetic_trace(&layer, n_in as usize, len, &SparsityModel::iid(p), seed).unwrap();
        let r = simulate_layer(&layer, &cfg, &trace).unwrap();
        let t = r.outputs as usize;
        let busiest = trace
            .streams()
            .iter()
            .map(|s| (0..t).map(|i| u64::from(s[i % len].nnz().div_ceil(k).max(1))).sum::<u64>())
            .max()
            .unwrap();
        prop_assert!(r.measured_cycles + 1 >= busiest);
        prop_assert_eq!(r.measured_cycles - r.stall_cycles, busiest);
    }
}
