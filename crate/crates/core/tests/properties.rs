//! Randomized invariants of the confidence widths and the simulation engine.

use colme::confidence::{optimistic_distance, optimistic_distance_multidim};
use colme::engine::{
    AlphaSchedule, ColmeMode, ColmeWorld, ConstantSource, GraphEstimator, GraphWorld, RandomSource,
    Simulation,
};
use colme::topology::{assign_classes, sample_regular_graph};
use colme::{ConfidenceParams, Decision, MeanRecord, Topology};
use proptest::prelude::*;

fn params(kind: u8, sigma: f64, gamma: f64) -> ConfidenceParams {
    if kind == 0 {
        ConfidenceParams::sub_gaussian(sigma, gamma).unwrap()
    } else {
        ConfidenceParams::bounded_fourth_moment(sigma, 3.0, gamma).unwrap()
    }
}

fn two_class_world(n: usize, r: usize, seed: u64) -> Topology {
    let labels = assign_classes(n, &[0.5, 0.5], seed ^ 1).unwrap();
    sample_regular_graph(n, r, seed)
        .unwrap()
        .with_classes(labels, vec![vec![0.0], vec![1.0]])
        .unwrap()
}

fn estimators() -> [GraphEstimator; 4] {
    [
        GraphEstimator::Local,
        GraphEstimator::MessagePassing { depth: 2 },
        GraphEstimator::Consensus { alpha: AlphaSchedule::TimeVarying },
        GraphEstimator::Consensus { alpha: AlphaSchedule::ResetOnPrune },
    ]
}

proptest! {
    #[test]
    fn beta_decreases_with_samples(kind in 0u8..2, sigma in 0.1f64..10.0, gamma in 1e-6f64..0.49, n in 1u64..100_000) {
        let p = params(kind, sigma, gamma);
        prop_assert!(p.beta(n + 1) < p.beta(n));
        prop_assert!(p.beta(n).is_finite() && p.beta(n) > 0.0);
    }

    #[test]
    fn beta_of_zero_is_infinite(kind in 0u8..2, sigma in 0.1f64..10.0, gamma in 1e-6f64..0.49) {
        prop_assert_eq!(params(kind, sigma, gamma).beta(0), f64::INFINITY);
    }

    #[test]
    fn smaller_gamma_widens(kind in 0u8..2, sigma in 0.1f64..10.0, gamma in 1e-6f64..0.2, n in 1u64..10_000) {
        let p = params(kind, sigma, gamma);
        let q = p.with_gamma(gamma * 2.0).unwrap();
        prop_assert!(q.beta(n) < p.beta(n));
    }

    #[test]
    fn n_star_is_minimal(kind in 0u8..2, sigma in 0.1f64..4.0, gamma in 1e-4f64..0.49, x in 0.05f64..5.0) {
        let p = params(kind, sigma, gamma);
        let n = p.n_star(x);
        prop_assert!(n >= 1);
        prop_assert!(p.beta(n) < x);
        prop_assert!(n == 1 || p.beta(n - 1) >= x);
    }

    #[test]
    fn distance_is_symmetric(ma in -5f64..5.0, mb in -5f64..5.0, na in 0u64..500, nb in 0u64..500) {
        let p = params(0, 1.0, 0.01);
        let a = MeanRecord::new(ma, na);
        let b = MeanRecord::new(mb, nb);
        prop_assert_eq!(optimistic_distance(a, b, &p), optimistic_distance(b, a, &p));
    }

    #[test]
    fn multidim_reduces_to_scalar(kind in 0u8..2, ma in -5f64..5.0, mb in -5f64..5.0, na in 1u64..500, nb in 1u64..500) {
        // at K = 1 the Bonferroni split and the √K factor are both neutral
        let p = params(kind, 1.0, 0.01);
        let scalar = optimistic_distance(MeanRecord::new(ma, na), MeanRecord::new(mb, nb), &p) > 0.0;
        let multi = optimistic_distance_multidim(
            MeanRecord::new(&[ma][..], na),
            MeanRecord::new(&[mb][..], nb),
            &p,
            1,
        )
        .unwrap();
        prop_assert_eq!(multi == Decision::Prune, scalar);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pruning_is_irreversible_and_symmetric(seed in any::<u64>(), est in 0usize..4) {
        let topo = two_class_world(60, 4, seed);
        let params = ConfidenceParams::sub_gaussian(0.5, 0.01).unwrap();
        let mut world = GraphWorld::new(topo.clone(), params, estimators()[est]).unwrap();
        let mut source = RandomSource::gaussian(&topo, 0.5, seed);
        let mut previous = world.active_edges();
        for _ in 0..60 {
            world.step(&mut source);
            let now = world.active_edges();
            prop_assert!(now.iter().all(|e| previous.contains(e)));
            for a in 0..topo.n_agents() {
                for b in world.active_neighbors(a) {
                    prop_assert!(world.is_active(b, a));
                }
                prop_assert_eq!(world.active_neighbors(a).len(), world.active_degree(a));
            }
            previous = now;
        }
    }

    #[test]
    fn constant_samples_are_a_fixpoint(seed in any::<u64>(), c in -100f64..100.0, est in 0usize..4) {
        let topo = two_class_world(40, 3, seed);
        let params = ConfidenceParams::sub_gaussian(1.0, 0.01).unwrap();
        let mut world = GraphWorld::new(topo, params, estimators()[est]).unwrap();
        let mut source = ConstantSource(vec![c]);
        for _ in 0..15 {
            world.step(&mut source);
            for a in 0..world.n_agents() {
                let e = world.estimate(a)[0];
                prop_assert!((e - c).abs() <= 1e-12 * c.abs().max(1.0), "agent {} got {}", a, e);
            }
        }
    }

    #[test]
    fn colme_constant_fixpoint(seed in any::<u64>(), c in -100f64..100.0, scolme in any::<bool>()) {
        let topo = two_class_world(20, 3, seed);
        let params = ConfidenceParams::sub_gaussian(1.0, 0.01).unwrap();
        let mode = if scolme { ColmeMode::SColme } else { ColmeMode::Colme };
        let mut world = ColmeWorld::new(topo, params, mode, 3).unwrap();
        let mut source = ConstantSource(vec![c]);
        for _ in 0..10 {
            world.step(&mut source);
            for a in 0..world.n_agents() {
                prop_assert!((world.estimate(a)[0] - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn consensus_conserves_the_average(seed in any::<u64>()) {
        // doubly stochastic weights keep the network average on the scalar
        // recurrence m_t = (1 − α) avg(x̄) + α m_{t−1}
        let topo = two_class_world(30, 4, seed);
        let params = ConfidenceParams::sub_gaussian(1.0, 0.01).unwrap();
        let est = GraphEstimator::Consensus { alpha: AlphaSchedule::TimeVarying };
        let mut world = GraphWorld::new(topo.clone(), params, est).unwrap().without_pruning();
        let mut source = RandomSource::gaussian(&topo, 1.0, seed);
        let n = topo.n_agents() as f64;
        let mut m = 0.0;
        for t in 1..=40u64 {
            world.step(&mut source);
            let avg_local: f64 = (0..topo.n_agents()).map(|a| world.local_mean(a)[0]).sum::<f64>() / n;
            let alpha = AlphaSchedule::TimeVarying.alpha(t);
            m = (1.0 - alpha) * avg_local + alpha * m;
            let avg_est: f64 = (0..topo.n_agents()).map(|a| world.estimate(a)[0]).sum::<f64>() / n;
            prop_assert!((avg_est - m).abs() < 1e-10, "round {}: {} vs {}", t, avg_est, m);
        }
    }
}

fn run_pair(est: GraphEstimator, seed: u64) -> Vec<Vec<f64>> {
    let topo = two_class_world(50, 4, seed);
    let params = ConfidenceParams::sub_gaussian(0.5, 0.01).unwrap();
    let mut world = GraphWorld::new(topo.clone(), params, est).unwrap();
    let mut source = RandomSource::gaussian(&topo, 0.5, seed);
    (0..30)
        .map(|_| {
            world.step(&mut source);
            (0..50).map(|a| world.estimate(a)[0]).collect()
        })
        .collect()
}

#[test]
fn same_seed_replays_bit_for_bit() {
    for est in estimators() {
        assert_eq!(run_pair(est, 9), run_pair(est, 9));
    }
}

#[test]
fn sampled_colme_prunes_no_earlier() {
    let pruned = |mode, seed| {
        let topo = two_class_world(50, 4, seed);
        let params = ConfidenceParams::sub_gaussian(0.5, 0.1 / 200.0).unwrap();
        let mut world = ColmeWorld::new(topo.clone(), params, mode, 5).unwrap();
        let mut source = RandomSource::gaussian(&topo, 0.5, seed);
        (0..200)
            .map(|_| {
                world.step(&mut source);
                (0..50).map(|a| 49 - world.est_class(a).len()).sum::<usize>()
            })
            .collect::<Vec<_>>()
    };
    for seed in 0..5 {
        let full = pruned(ColmeMode::Colme, seed);
        let sampled = pruned(ColmeMode::SColme, seed);
        for (t, (f, s)) in full.iter().zip(&sampled).enumerate() {
            assert!(s <= f, "seed {seed} round {}: s_colme pruned {s}, colme {f}", t + 1);
        }
    }
}
