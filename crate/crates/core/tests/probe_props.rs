mod common;

use augrank::probe::{
    evaluate, pairwise_rank_loss, score, softplus_neg, train, DimMap, FeatureStats, Objective, PairDataset, RankProbe,
    TrainConfig,
};
use augrank::rng::derive_named;
use augrank::Error;
use common::{flat_layers, linear_dataset, pair};
use proptest::prelude::*;

#[test]
fn loss_reference_values() {
    assert!((pairwise_rank_loss(0.0, 0.0, true) - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((pairwise_rank_loss(2.0, 0.0, true) - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
    assert!((pairwise_rank_loss(0.0, 2.0, true) - (1.0 + 2.0f64.exp()).ln()).abs() < 1e-12);
    assert!((pairwise_rank_loss(0.0, 2.0, false) - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
    // stable far out in both tails
    assert_eq!(softplus_neg(1e4), 0.0);
    assert!((softplus_neg(-1e4) - 1e4).abs() < 1e-9);
}

#[test]
fn gradient_matches_central_differences() {
    let data = linear_dataset(1, 64, &[1.0, -2.0, 0.5, 0.0, 3.0], 0.1);
    let stats = FeatureStats::from_pairs(&data).unwrap();
    let objective = Objective::new(&data, &stats.std, 0.01);
    let mut rng = derive_named(2, "fd-draws");
    for _ in 0..20 {
        let w: Vec<f64> = (0..5).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let g = objective.gradient(&w, None);
        let h = 1e-5;
        for i in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (objective.value(&up) - objective.value(&dn)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "dim {i}: analytic {} vs fd {fd} (rel {rel})", g[i]);
        }
    }
}

#[test]
fn separable_data_is_learned_perfectly() {
    let pairs = (0..200)
        .map(|i| {
            let (x, y) = (i as f32 * 0.01, (199 - i) as f32 * 0.01);
            pair(i, vec![x], vec![y], x > y)
        })
        .filter(|p| p.a.values != p.b.values)
        .collect();
    let data = PairDataset::new(DimMap::from_layers(&flat_layers(&[(1, 0)])), pairs).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        learning_rate: 0.1,
        ..Default::default()
    };
    let (probe, log) = train(&data, &cfg).unwrap();
    assert_eq!(log.train_accuracy, 1.0);
    assert_eq!(evaluate(&probe, &data.pairs).unwrap(), 1.0);
    assert!(probe.weights[0] > 0.0);
}

#[test]
fn heavy_penalty_drives_loss_to_ln2() {
    let data = linear_dataset(3, 100, &[1.0, 1.0], 0.0);
    let cfg = TrainConfig {
        l2: 1e3,
        learning_rate: 1e-4,
        epochs: 50,
        ..Default::default()
    };
    let (probe, log) = train(&data, &cfg).unwrap();
    assert!(probe.weights.iter().all(|w| w.abs() < 1e-3));
    assert!((log.final_loss - std::f64::consts::LN_2).abs() < 1e-3);
}

#[test]
fn different_seeds_reach_the_same_optimum() {
    let data = linear_dataset(4, 300, &[1.0, -1.0, 0.5, 0.2], 0.2);
    let base = TrainConfig {
        learning_rate: 0.05,
        epochs: 400,
        batch_size: 32,
        l2: 1e-2,
        ..Default::default()
    };
    let (_, a) = train(
        &data,
        &TrainConfig {
            seed: 1,
            ..base.clone()
        },
    )
    .unwrap();
    let (_, b) = train(&data, &TrainConfig { seed: 2, ..base }).unwrap();
    assert!(
        (a.final_loss - b.final_loss).abs() < 1e-3,
        "{} vs {}",
        a.final_loss,
        b.final_loss
    );
}

#[test]
fn training_is_deterministic() {
    let data = linear_dataset(5, 100, &[0.3, -0.7, 1.0], 0.1);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 16,
        momentum: 0.5,
        ..Default::default()
    };
    let (p, l) = train(&data, &cfg).unwrap();
    let (q, m) = train(&data, &cfg).unwrap();
    assert_eq!(p, q);
    assert_eq!(l, m);
}

#[test]
fn bias_is_inert_in_the_loss() {
    let data = linear_dataset(6, 50, &[1.0, 2.0], 0.1);
    let (mut probe, _) = train(
        &data,
        &TrainConfig {
            epochs: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let before: Vec<f64> = data
        .pairs
        .iter()
        .map(|p| pairwise_rank_loss(score(&probe, &p.a).unwrap(), score(&probe, &p.b).unwrap(), p.label))
        .collect();
    probe.bias = 17.5;
    for (p, l) in data.pairs.iter().zip(before) {
        let after = pairwise_rank_loss(score(&probe, &p.a).unwrap(), score(&probe, &p.b).unwrap(), p.label);
        assert!((after - l).abs() < 1e-9);
    }
}

#[test]
fn ties_count_as_errors() {
    let data = PairDataset::new(
        DimMap::from_layers(&flat_layers(&[(1, 0)])),
        vec![pair(0, vec![1.0], vec![1.0], true), pair(1, vec![2.0], vec![1.0], true)],
    )
    .unwrap();
    let probe = RankProbe::from_weights(vec![1.0], 0.0, data.dim_map.clone());
    assert_eq!(evaluate(&probe, &data.pairs).unwrap(), 0.5);
}

#[test]
fn divergence_is_reported() {
    let data = linear_dataset(7, 50, &[1.0, 1.0], 0.0);
    let cfg = TrainConfig {
        learning_rate: 1e300,
        l2: 1.0,
        epochs: 5,
        ..Default::default()
    };
    let err = train(&data, &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    assert_eq!(err.class(), augrank::ErrorClass::Numerical);
}

#[test]
fn probe_json_round_trip() {
    let data = linear_dataset(8, 40, &[1.0, -1.0], 0.0);
    let (probe, _) = train(
        &data,
        &TrainConfig {
            epochs: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.json");
    probe.save(&path).unwrap();
    assert_eq!(RankProbe::load(&path).unwrap(), probe);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swapping_members_and_label_preserves_loss(sa in -50.0f64..50.0, sb in -50.0f64..50.0, label: bool) {
        prop_assert!((pairwise_rank_loss(sa, sb, label) - pairwise_rank_loss(sb, sa, !label)).abs() < 1e-12);
    }

    #[test]
    fn loss_is_nonnegative_and_decreasing_in_margin(m1 in -30.0f64..30.0, dm in 0.001f64..5.0) {
        let (a, b) = (softplus_neg(m1), softplus_neg(m1 + dm));
        prop_assert!(a >= 0.0 && b >= 0.0 && b < a);
    }

    #[test]
    fn swapped_dataset_trains_to_negated_scores(seed in 0u64..1000) {
        let data = linear_dataset(seed, 30, &[1.0, -0.5], 0.1);
        let swapped = PairDataset::new(
            data.dim_map.clone(),
            data.pairs.iter().map(|p| augrank::probe::LabeledPair { a: p.b.clone(), b: p.a.clone(), label: !p.label, ..p.clone() }).collect(),
        ).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 8, ..Default::default() };
        let (p, lp) = train(&data, &cfg).unwrap();
        let (q, lq) = train(&swapped, &cfg).unwrap();
        prop_assert!((lp.final_loss - lq.final_loss).abs() < 1e-9);
        for (x, y) in p.weights.iter().zip(&q.weights) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
