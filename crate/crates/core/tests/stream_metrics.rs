use fairstream::adwin::{level_error, AdaptiveWindow, DriftSignal};
use fairstream::metrics::{imbalance_ratio, FairnessAccumulator};
use fairstream::stream::{subgroup_of, SlidingWindow, StreamConfig, SubgroupCounters};
use fairstream::{Group, Instance, Label};
use proptest::prelude::*;

fn group(b: bool) -> Group {
    if b {
        Group::Privileged
    } else {
        Group::Unprivileged
    }
}

fn label(b: bool) -> Label {
    if b {
        Label::Favorable
    } else {
        Label::Unfavorable
    }
}

proptest! {
    #[test]
    fn prefix_counts_match_recount(tags in prop::collection::vec((any::<bool>(), any::<bool>()), 0..300)) {
        let mut counters = SubgroupCounters::new();
        let mut window = SlidingWindow::new();
        for (i, &(g, l)) in tags.iter().enumerate() {
            let inst = Instance::new(vec![0.0], group(g), label(l), i as u64);
            counters.observe(inst.subgroup());
            window.push(inst);
            let mut brute = [0u64; 4];
            for &(g, l) in &tags[..=i] {
                brute[subgroup_of(group(g), label(l)).index()] += 1;
            }
            prop_assert_eq!(counters.observed, brute);
            prop_assert_eq!(window.recount(), brute);
        }
    }

    #[test]
    fn imbalance_ratio_bounded_and_scale_free(a in 0u64..1_000_000, b in 1u64..1_000_000, k in 1u64..10_000) {
        let ir = imbalance_ratio(a, b).unwrap();
        prop_assert!((0.0..=0.5).contains(&ir));
        let scaled = imbalance_ratio(k * a, k * b).unwrap();
        prop_assert!((ir - scaled).abs() <= 1e-12 * ir.max(1e-300) || ir == scaled);
        prop_assert_eq!(ir, imbalance_ratio(b, a).unwrap());
    }

    #[test]
    fn fairness_values_bounded_and_antisymmetric(
        steps in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..300),
        lambda in 0.0f64..=1.0,
    ) {
        let mut acc = FairnessAccumulator::new(lambda).unwrap();
        let mut swapped = FairnessAccumulator::new(lambda).unwrap();
        for &(g, y, p) in &steps {
            let a = acc.update(group(g), label(y), label(p));
            let b = swapped.update(group(!g), label(y), label(p));
            prop_assert!(a.cspd.value.abs() <= 1.0 && a.ceod.value.abs() <= 1.0);
            prop_assert!((a.cspd.value + b.cspd.value).abs() <= 1e-12);
            prop_assert!((a.ceod.value + b.ceod.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn detector_mean_matches_retained_values(
        head in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 1..1500),
        tail_len in 0usize..1500,
        tail_value in prop_oneof![Just(0.0), Just(1.0)],
    ) {
        let mut values = head;
        values.extend(std::iter::repeat_n(tail_value, tail_len));
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        let mut shadow: Vec<f64> = Vec::new();
        for &v in &values {
            let before = w.len() + 1;
            shadow.push(v);
            if let DriftSignal::Change { window_before, window_after } = w.insert(v) {
                prop_assert_eq!(window_before, before);
                prop_assert!(window_after < window_before);
                shadow.drain(..shadow.len() - window_after as usize);
            }
            prop_assert_eq!(w.len(), shadow.len() as u64);
            let exact = shadow.iter().sum::<f64>() / shadow.len() as f64;
            prop_assert!((w.window_mean().unwrap() - exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn warning_level_is_looser(n in 2u64..10_000_000, delta in 1e-6f64..0.09) {
        prop_assert!(level_error(n, delta * 10.0).unwrap() < level_error(n, delta).unwrap());
    }
}

#[test]
fn generator_is_reproducible() {
    let cfg = StreamConfig {
        n_instances: 2000,
        ..StreamConfig::canonical(17)
    };
    let a: Vec<Instance> = cfg.stream().unwrap().collect();
    let b: Vec<Instance> = cfg.stream().unwrap().collect();
    assert_eq!(a, b);
    let other: Vec<Instance> = StreamConfig { seed: 18, ..cfg }.stream().unwrap().collect();
    assert_ne!(a, other);
}
