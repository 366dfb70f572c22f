mod common;

use augrank::importance::{dimension_importance, layer_importance, probe_importance, Aggregation};
use augrank::probe::{train, DimMap, FeatureStats, PairDataset, RankProbe, TrainConfig};
use augrank::TaskKind;
use common::{flat_layers, linear_dataset, pair};
use proptest::prelude::*;

#[test]
fn two_layer_reference_shares() {
    let dim_map = DimMap::from_layers(&flat_layers(&[(1, 0), (1, 1)]));
    let probe = RankProbe::from_weights(vec![1.0, -1.0], 0.0, dim_map.clone());
    let stats = FeatureStats {
        mean: vec![0.0, 0.0],
        std: vec![2.0, 1.0],
    };
    let dims = dimension_importance(&probe, &stats).unwrap();
    assert_eq!(dims, vec![2.0, 1.0]);
    let report = layer_importance(TaskKind::Hue, &dims, &dim_map).unwrap();
    for mode in Aggregation::BOTH {
        let s = report.shares(mode);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12 && (s[1] - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn mean_and_max_differ_on_wide_layers() {
    let dim_map = DimMap::from_layers(&flat_layers(&[(1, 0), (3, 1)]));
    let report = layer_importance(TaskKind::Hue, &[1.0, 3.0, 0.0, 0.0], &dim_map).unwrap();
    assert_eq!(report.shares(Aggregation::Mean), vec![0.5, 0.5]);
    assert_eq!(report.shares(Aggregation::Max), vec![0.25, 0.75]);
}

fn rescaled(data: &PairDataset, dim: usize, c: f32) -> PairDataset {
    let mut out = data.clone();
    for p in &mut out.pairs {
        p.a.values[dim] *= c;
        p.b.values[dim] *= c;
    }
    out
}

#[test]
fn importance_ignores_feature_units() {
    let base = linear_dataset(9, 200, &[1.0, -0.5, 0.25], 0.1);
    let data = PairDataset::new(DimMap::from_layers(&flat_layers(&[(1, 0), (2, 1)])), base.pairs).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        ..Default::default()
    };
    let (p, _) = train(&data, &cfg).unwrap();
    let r = probe_importance(TaskKind::Hue, &p, &data).unwrap();
    let scaled = rescaled(&data, 1, 1000.0);
    let (q, _) = train(&scaled, &cfg).unwrap();
    let s = probe_importance(TaskKind::Hue, &q, &scaled).unwrap();
    for mode in Aggregation::BOTH {
        for (x, y) in r.shares(mode).iter().zip(s.shares(mode)) {
            assert!((x - y).abs() < 1e-6, "{mode:?}: {x} vs {y}");
        }
    }
}

#[test]
fn constant_dimensions_get_no_credit() {
    let pairs = (0..40)
        .map(|i| pair(i, vec![i as f32, 1.0], vec![(40 - i) as f32, 1.0], i > 20))
        .collect();
    let data = PairDataset::new(DimMap::from_layers(&flat_layers(&[(1, 0), (1, 1)])), pairs).unwrap();
    let (p, _) = train(
        &data,
        &TrainConfig {
            epochs: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let r = probe_importance(TaskKind::Hue, &p, &data).unwrap();
    assert_eq!(r.shares(Aggregation::Mean), vec![1.0, 0.0]);
}

proptest! {
    #[test]
    fn shares_sum_to_one(
        widths in prop::collection::vec(1usize..6, 1..6),
        seed in 0u64..10_000,
    ) {
        let layers: Vec<(usize, u32)> = widths.iter().enumerate().map(|(i, &w)| (w, i as u32)).collect();
        let dim_map = DimMap::from_layers(&flat_layers(&layers));
        let mut rng = augrank::rng::derive_named(seed, "shares");
        let dims: Vec<f64> = (0..dim_map.len()).map(|_| rng.uniform(0.0, 5.0)).collect();
        let report = layer_importance(TaskKind::Contrast, &dims, &dim_map).unwrap();
        for mode in Aggregation::BOTH {
            let s: f64 = report.shares(mode).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
