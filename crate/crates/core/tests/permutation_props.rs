mod common;

use common::{Instance, Sim};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weatlab::lexicon::{ResolvedTest, TestId};
use weatlab::permutation::{self, PermutationMode, PermutationPlan, PlanOptions};
use weatlab::weat::Metric;

fn resolved(i: &Instance) -> ResolvedTest {
    ResolvedTest::from_vectors(TestId::new(2).unwrap(), i.x.clone(), i.y.clone(), i.a.clone(), i.b.clone()).unwrap()
}

fn exact_plan(t: &ResolvedTest) -> PermutationPlan {
    let p = PermutationPlan::for_test(t, &PlanOptions::default()).unwrap();
    assert_eq!(p.mode, PermutationMode::Exact);
    p
}

fn fixture() -> Instance {
    Instance {
        x: vec![vec![1.0, 0.0], vec![0.9, 0.1]],
        y: vec![vec![0.0, 1.0], vec![0.1, 0.9]],
        a: vec![vec![1.0, 0.0]],
        b: vec![vec![0.0, 1.0]],
    }
}

#[test]
fn partition_order_and_counts() {
    assert_eq!(permutation::enumerate_partitions(4, 2).unwrap().count(), 6);
    let ones: Vec<Vec<usize>> = permutation::enumerate_partitions(3, 1).unwrap().collect();
    assert_eq!(ones, vec![vec![0], vec![1], vec![2]]);
    let mut it = permutation::enumerate_partitions(10, 5).unwrap();
    assert_eq!(it.next().unwrap(), vec![0, 1, 2, 3, 4]);
    assert_eq!(it.count(), 251);
    assert!(PermutationPlan::new(5, 5, &PlanOptions::default()).is_err());
}

#[test]
fn planar_fixture_against_enumeration() {
    let f = fixture();
    let t = resolved(&f);
    let r = permutation::p_value(&t, Metric::Cosine, &exact_plan(&t)).unwrap();
    let (q, ties, total) = common::exact_counts(Sim::Cosine, &f.x, &f.y, &f.a, &f.b);
    assert_eq!(total, 6);
    assert_eq!((r.qualifying, r.ties, r.partitions_evaluated), (q, ties, total));
    assert_eq!(r.p_value, q as f64 / 6.0);
    // the observed split is the most extreme one
    assert_eq!(r.p_value, 0.0);
}

#[test]
fn mirrored_fixture_counts_smaller_partitions() {
    let f = fixture();
    let observed = common::statistic(Sim::Cosine, &f.x, &f.y, &f.a, &f.b);
    let pool: Vec<Vec<f64>> = f.x.iter().chain(&f.y).cloned().collect();
    let mut smaller = 0;
    for mask in 0u32..16 {
        if mask.count_ones() != 2 {
            continue;
        }
        let xs: Vec<_> = (0..4).filter(|i| mask >> i & 1 == 1).map(|i| pool[i].clone()).collect();
        let ys: Vec<_> = (0..4).filter(|i| mask >> i & 1 == 0).map(|i| pool[i].clone()).collect();
        if common::statistic(Sim::Cosine, &xs, &ys, &f.a, &f.b) < observed - common::TIE {
            smaller += 1;
        }
    }
    let swapped = resolved(&f).swap_targets();
    let r = permutation::p_value(&swapped, Metric::Cosine, &exact_plan(&swapped)).unwrap();
    assert_eq!(r.qualifying, smaller);
    assert_eq!(r.p_value, smaller as f64 / 6.0);
    assert_eq!(smaller, 5);
}

#[test]
fn identical_singletons_tie() {
    let inst = Instance {
        x: vec![vec![1.0, 2.0]],
        y: vec![vec![1.0, 2.0]],
        a: vec![vec![0.0, 1.0]],
        b: vec![vec![1.0, 0.0]],
    };
    let t = resolved(&inst);
    for m in Metric::ALL {
        let r = permutation::p_value(&t, m, &exact_plan(&t)).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.ties, 1);
        assert!(r.significant);
    }
}

#[test]
fn exact_counts_match_brute_force() {
    for seed in 1000..1060 {
        let inst = common::random_instance(seed, 12, 8);
        let t = resolved(&inst);
        for (m, s) in [(Metric::Cosine, Sim::Cosine), (Metric::Euclidean, Sim::Euclidean)] {
            let r = permutation::p_value(&t, m, &exact_plan(&t)).unwrap();
            let (q, ties, total) = common::exact_counts(s, &inst.x, &inst.y, &inst.a, &inst.b);
            assert_eq!((r.qualifying, r.ties, r.partitions_evaluated), (q, ties, total), "seed {seed} {m}");
        }
    }
}

#[test]
fn two_way_sampling_is_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 100_000u64;
    let mut zeros = 0u64;
    for _ in 0..draws {
        let s = permutation::sample_partition(&mut rng, 2, 1).unwrap();
        assert!(s == [0] || s == [1]);
        zeros += u64::from(s == [0]);
    }
    let sd = (draws as f64 * 0.25).sqrt();
    assert!((zeros as f64 - draws as f64 / 2.0).abs() <= 3.0 * sd, "{zeros}");
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let inst = common::random_instance(7, 12, 8);
    let big = Instance {
        x: (0..10).map(|i| common::random_instance(i, 12, 8).a[0][..2].to_vec()).collect(),
        y: (10..20).map(|i| common::random_instance(i, 12, 8).a[0][..2].to_vec()).collect(),
        a: inst.a.iter().map(|v| v[..2].to_vec()).collect(),
        b: inst.b.iter().map(|v| v[..2].to_vec()).collect(),
    };
    let t = resolved(&big);
    let opts = PlanOptions {
        exact_threshold: 0,
        num_samples: 30_000,
        seed: 5,
        ..Default::default()
    };
    let plan = PermutationPlan::for_test(&t, &opts).unwrap();
    assert_eq!(plan.mode, PermutationMode::MonteCarlo);
    let results: Vec<_> = [1, 3, 8]
        .iter()
        .map(|&n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| permutation::p_value(&t, Metric::Cosine, &plan).unwrap())
        })
        .collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(results[0].smoothed_p_value, Some((results[0].qualifying + 1) as f64 / 30_001.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unrank_matches_enumeration(n in 2usize..12, k_frac in 0.0f64..1.0) {
        let k = ((n as f64 * k_frac) as usize).clamp(1, n - 1);
        for (rank, combo) in permutation::enumerate_partitions(n, k).unwrap().enumerate() {
            prop_assert_eq!(permutation::unrank_combination(n, k, rank as u64), combo);
        }
        prop_assert_eq!(permutation::binomial(n, k), Some(common::binom(n as u64, k as u64)));
    }

    #[test]
    fn samples_are_sorted_subsets(seed in any::<u64>(), n in 2usize..40, k_frac in 0.0f64..1.0) {
        let k = ((n as f64 * k_frac) as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = permutation::sample_partition(&mut rng, n, k).unwrap();
        prop_assert_eq!(s.len(), k);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.iter().all(|&i| i < n));
    }
}
