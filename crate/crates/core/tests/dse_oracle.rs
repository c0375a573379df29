mod common;

use common::exhaustive_optimum;
use pass_core::analytic::ThroughputModel;
use pass_core::dse::{allocate_macs, greedy_allocation, AnnealSchedule};
use pass_core::netspec::{LayerSpec, NetworkSpec, ResourceBudget};
use pass_core::trace::SparsityStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stats_from_means(means: &[Vec<f64>]) -> Vec<SparsityStats> {
    means
        .iter()
        .map(|m| SparsityStats {
            per_stream_mean: m.clone(),
            per_stream_variance: vec![0.0; m.len()],
            global_mean: m.iter().sum::<f64>() / m.len() as f64,
        })
        .collect()
}

#[test]
fn two_layer_toy_matches_exhaustive_search() {
    let net = NetworkSpec {
        batch_size: 1,
        layers: vec![
            LayerSpec::new("sparse", 4, 4, 4, 4, 3, 3),
            LayerSpec::new("dense", 4, 4, 4, 4, 3, 3),
        ],
    };
    let means = vec![vec![0.8; 4], vec![0.2; 4]];
    let oracle = exhaustive_optimum(&net, &means, 24, 10_000).unwrap();
    let stats = stats_from_means(&means);
    let budget = ResourceBudget::new(24, 10_000);
    for seed in 0..5 {
        let d = allocate_macs(&net, &stats, &budget, &AnnealSchedule::with_seed(seed)).unwrap();
        assert!(d.feasible);
        assert!(
            d.objective >= 0.95 * oracle.objective,
            "seed {seed}: {} vs {}",
            d.objective,
            oracle.objective
        );
    }
    // The optimum gives the denser layer more MACs.
    let macs: Vec<u32> = oracle
        .choices
        .iter()
        .map(|c| c.n_in * c.n_out * c.k)
        .collect();
    assert!(macs[1] > macs[0], "{:?}", oracle.choices);
}

fn random_instance(rng: &mut ChaCha8Rng) -> (NetworkSpec, Vec<Vec<f64>>, u64) {
    let layers = rng.random_range(1..=3);
    let net = NetworkSpec {
        batch_size: rng.random_range(1..=2),
        layers: (0..layers)
            .map(|i| {
                let kx = rng.random_range(1..=3);
                LayerSpec::new(
                    format!("l{i}"),
                    rng.random_range(1..=8),
                    rng.random_range(1..=8),
                    rng.random_range(1..=8),
                    rng.random_range(1..=8),
                    kx,
                    kx,
                )
            })
            .collect(),
    };
    let means = net
        .layers
        .iter()
        .map(|l| (0..l.c_in).map(|_| rng.random_range(0.0..0.95)).collect())
        .collect();
    let budget = rng.random_range(layers as u64..=64);
    (net, means, budget)
}

#[test]
fn annealing_is_never_worse_than_greedy_and_near_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..12 {
        let (net, means, dsp) = random_instance(&mut rng);
        let stats = stats_from_means(&means);
        let budget = ResourceBudget::new(dsp, 100_000);
        let oracle = exhaustive_optimum(&net, &means, dsp, 100_000).unwrap();
        let greedy = greedy_allocation(ThroughputModel::Linear, &net, &stats, &budget).unwrap();
        let sa = allocate_macs(&net, &stats, &budget, &AnnealSchedule::with_seed(case)).unwrap();
        assert!(sa.objective >= greedy.objective, "case {case}");
        assert!(
            sa.objective <= oracle.objective * (1.0 + 1e-12),
            "case {case}: beat the oracle"
        );
        assert!(
            sa.objective >= 0.95 * oracle.objective,
            "case {case}: {} vs {}",
            sa.objective,
            oracle.objective
        );
    }
}

#[test]
fn oracle_agrees_with_library_objective_on_its_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let (net, means, dsp) = random_instance(&mut rng);
        let oracle = exhaustive_optimum(&net, &means, dsp, 100_000).unwrap();
        let configs: Vec<_> = oracle
            .choices
            .iter()
            .map(|c| pass_core::pipeline::LayerConfig::new(c.n_in, c.n_out, c.k, 0))
            .collect();
        let lib = pass_core::analytic::network_objective(&net, &configs, &stats_from_means(&means))
            .unwrap();
        assert!((lib - oracle.objective).abs() <= 1e-12 * oracle.objective);
    }
}
