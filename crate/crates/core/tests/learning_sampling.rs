use fairstream::learners::{GaussianNB, HoeffdingConfig, HoeffdingTree, OnlineLearner};
use fairstream::sampling::{
    cluster_weights, fair_generate, largest_remainder, OneTimeLedger, SamplerConfig, SamplingPlan, Standardizer,
};
use fairstream::stream::{SlidingWindow, SubgroupCounters};
use fairstream::{Group, Instance, Label, Subgroup};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label(b: bool) -> Label {
    if b {
        Label::Favorable
    } else {
        Label::Unfavorable
    }
}

proptest! {
    #[test]
    fn naive_bayes_matches_batch_moments(
        rows in prop::collection::vec((prop::collection::vec(-50.0f64..50.0, 3), any::<bool>()), 1..60),
        seed in any::<u64>(),
    ) {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut nb = GaussianNB::new();
        for (x, y) in &shuffled {
            nb.train(x, label(*y)).unwrap();
        }
        for class in [true, false] {
            let members: Vec<&Vec<f64>> = rows.iter().filter(|r| r.1 == class).map(|r| &r.0).collect();
            prop_assert_eq!(nb.class_count(label(class)), members.len() as u64);
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            for j in 0..3 {
                let mean = members.iter().map(|x| x[j]).sum::<f64>() / n;
                let var = members.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
                prop_assert!((nb.feature_mean(label(class), j).unwrap() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
                prop_assert!((nb.feature_variance(label(class), j).unwrap() - var).abs() <= 1e-9 * (1.0 + var));
            }
        }
    }

    #[test]
    fn largest_remainder_sums_and_stays_within_one(
        counts in prop::collection::vec(0u64..1000, 1..12),
        total in 0u64..5000,
    ) {
        let shares = largest_remainder(&counts, total);
        let denom: u64 = counts.iter().sum();
        if denom == 0 {
            prop_assert!(shares.iter().all(|&s| s == 0));
        } else {
            prop_assert_eq!(shares.iter().sum::<u64>(), total);
            for (&s, &c) in shares.iter().zip(&counts) {
                let exact = total as f64 * c as f64 / denom as f64;
                prop_assert!(s as f64 >= exact.floor() && s as f64 <= exact.floor() + 1.0);
            }
        }
    }

    #[test]
    fn weights_reproduce_recount(
        assignment in prop::collection::vec(0usize..5, 1..200),
        flags_seed in any::<u64>(),
        n_num in 1u64..500,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(flags_seed);
        let minority: Vec<bool> = assignment.iter().map(|_| rng.random_bool(0.4)).collect();
        match cluster_weights(&assignment, 5, &minority, n_num) {
            Err(_) => prop_assert!(minority.iter().all(|m| !m)),
            Ok(w) => {
                let total = minority.iter().filter(|&&m| m).count() as u64;
                prop_assert_eq!(w.minority_total, total);
                prop_assert_eq!(w.minority_counts.iter().sum::<u64>(), total);
                for c in 0..5 {
                    let brute = assignment.iter().zip(&minority).filter(|(&a, &m)| a == c && m).count() as u64;
                    prop_assert_eq!(w.minority_counts[c], brute);
                    prop_assert!((w.weights[c] - brute as f64 / total as f64).abs() <= 1e-15);
                }
                prop_assert_eq!(w.total_quota(), n_num);
            }
        }
    }
}

fn blob_window(seed: u64, n: usize) -> (SlidingWindow, Standardizer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut window = SlidingWindow::new();
    let mut standardizer = Standardizer::new();
    for seq in 0..n as u64 {
        let c = if rng.random_bool(0.5) { 0.0 } else { 6.0 };
        let x = vec![c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0) - c];
        standardizer.observe(&x);
        let g = if rng.random_bool(0.6) { Group::Privileged } else { Group::Unprivileged };
        window.push(Instance::new(x, g, label(rng.random_bool(0.3)), seq));
    }
    (window, standardizer)
}

fn generate(seed: u64, target: Subgroup, n_num: u64) -> (Vec<Instance>, SamplingPlan, SlidingWindow) {
    let (window, standardizer) = blob_window(seed, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = SamplingPlan::build(&window, &standardizer, &SamplerConfig::default(), &mut rng).unwrap();
    let flags = plan.minority_flags(&window, |sg| sg == target);
    let quota = cluster_weights(&plan.clustering.assignment, plan.clustering.k, &flags, n_num).unwrap();
    let out = fair_generate(
        &window,
        &plan,
        &flags,
        &quota,
        5,
        &mut OneTimeLedger::new(),
        &mut SubgroupCounters::new(),
        &mut rng,
    )
    .unwrap();
    (out, plan, window)
}

#[test]
fn synthetics_stay_between_retained_same_cluster_endpoints() {
    for seed in 0..20 {
        let target = Subgroup::ALL[seed as usize % 4];
        let (out, plan, window) = generate(seed, target, 40);
        assert_eq!(out.len(), 40);
        let flags = plan.minority_flags(&window, |sg| sg == target);
        for s in &out {
            let t = window.position_of(s.seq).unwrap();
            assert!(flags[t], "template was filtered or outside the target");
            let feasible = (0..plan.len()).any(|j| {
                flags[j]
                    && plan.clustering.assignment[j] == plan.clustering.assignment[t]
                    && s.features.iter().enumerate().all(|(d, &v)| {
                        let (a, b) = (window.get(t).unwrap().features[d], window.get(j).unwrap().features[d]);
                        a.min(b) - 1e-12 <= v && v <= a.max(b) + 1e-12
                    })
            });
            assert!(feasible);
        }
    }
}

#[test]
fn generation_is_reproducible() {
    let a = generate(9, Subgroup::UnprivilegedFavorable, 25).0;
    let b = generate(9, Subgroup::UnprivilegedFavorable, 25).0;
    assert_eq!(a, b);
}

#[test]
fn naive_bayes_accuracy_does_not_degrade_on_stationary_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nb = GaussianNB::new();
    let mut window_acc = Vec::new();
    let mut correct = 0;
    for i in 1..=5000 {
        let y = rng.random_bool(0.5);
        let c = if y { 2.0 } else { -2.0 };
        let x = [c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if nb.predict(&x).unwrap().label == label(y) {
            correct += 1;
        }
        nb.train(&x, label(y)).unwrap();
        if i % 500 == 0 {
            window_acc.push(correct as f64 / 500.0);
            correct = 0;
        }
    }
    // the first window includes the cold start
    let drops = window_acc[1..].windows(2).filter(|w| w[1] < w[0]).count();
    assert!(drops <= 1, "{window_acc:?}");
}

#[test]
fn tree_growth_is_monotone_and_routing_deterministic() {
    let cfg = HoeffdingConfig {
        grace_period: 50,
        ..HoeffdingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tree = HoeffdingTree::new(cfg.clone());
    let mut twin = HoeffdingTree::new(cfg);
    let mut nodes = tree.n_nodes();
    for _ in 0..4000 {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let y = label(x[0] > 0.3 && x[1] < 0.7);
        tree.train(&x, y).unwrap();
        twin.train(&x, y).unwrap();
        assert!(tree.n_nodes() >= nodes);
        nodes = tree.n_nodes();
        assert_eq!(tree.leaf_index(&x), tree.leaf_index(&x));
        assert_eq!(tree.leaf_index(&x), twin.leaf_index(&x));
    }
    assert!(tree.n_splits() >= 2);
}
