use std::collections::HashSet;

use augrank::rng::{derive_named, derive_rng, SeedSpec};
use augrank::TaskKind;
use proptest::prelude::*;

#[test]
fn distinct_specs_give_distinct_streams() {
    let mut seen = HashSet::with_capacity(1_000_000);
    let ids: Vec<String> = (0..1000).map(|i| format!("img{i}")).collect();
    for (t, task) in [TaskKind::Hue, TaskKind::ZoomIn].into_iter().enumerate() {
        for id in &ids {
            for k in 0..500u32 {
                let first = derive_rng(&SeedSpec::new(t as u64, id.clone(), task, k)).next_u64();
                assert!(seen.insert(first), "collision at {id}/{task}/{k}");
            }
        }
    }
    assert_eq!(seen.len(), 1_000_000);
}

#[test]
fn uniform_mean_is_one_half() {
    let mut rng = derive_rng(&SeedSpec::new(0, "mean", TaskKind::Brightness, 0));
    let n = 100_000;
    let mean: f64 = (0..n).map(|_| rng.next_f64()).sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn named_streams_are_separate_from_spec_streams() {
    let a = derive_named(0, "x").next_u64();
    let b = derive_named(0, "y").next_u64();
    let c = derive_named(1, "x").next_u64();
    assert!(a != b && a != c);
}

#[test]
fn below_is_unbiased_enough() {
    let mut rng = derive_named(3, "below");
    let mut counts = [0usize; 6];
    for _ in 0..60_000 {
        counts[rng.below(6) as usize] += 1;
    }
    assert!(counts.iter().all(|&c| (9_400..10_600).contains(&c)), "{counts:?}");
}

proptest! {
    #[test]
    fn same_spec_same_stream(seed: u64, id in "[a-z0-9]{1,12}", k: u32) {
        let spec = SeedSpec::new(seed, id, TaskKind::Contrast, k);
        let xs: Vec<f64> = { let mut r = derive_rng(&spec); (0..8).map(|_| r.next_f64()).collect() };
        let ys: Vec<f64> = { let mut r = derive_rng(&spec); (0..8).map(|_| r.next_f64()).collect() };
        prop_assert_eq!(&xs, &ys);
        prop_assert!(xs.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn id_prefixes_give_different_streams(a in "[a-z]{1,6}", b in "[a-z]{1,6}") {
        let s1 = SeedSpec::new(0, format!("{a}{b}"), TaskKind::Hue, 0);
        let s2 = SeedSpec::new(0, a.clone(), TaskKind::Hue, 0);
        prop_assume!(!b.is_empty());
        prop_assert_ne!(derive_rng(&s1).next_u64(), derive_rng(&s2).next_u64());
    }

    #[test]
    fn shuffle_is_a_permutation(seed: u64, n in 0usize..200) {
        let mut v: Vec<usize> = (0..n).collect();
        derive_named(seed, "perm").shuffle(&mut v);
        let mut s = v.clone();
        s.sort();
        prop_assert_eq!(s, (0..n).collect::<Vec<_>>());
    }
}
