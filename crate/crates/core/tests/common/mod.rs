#![allow(dead_code)]

use augrank::probe::{DimMap, LabeledPair, PairDataset, ProbeInput};
use augrank::rng::derive_named;
use augrank::LayerMeta;

pub fn flat_layers(widths: &[(usize, u32)]) -> Vec<LayerMeta> {
    widths
        .iter()
        .enumerate()
        .map(|(i, &(c, b))| LayerMeta::pooled(format!("layer{i}"), c, b))
        .collect()
}

pub fn pair(id: usize, a: Vec<f32>, b: Vec<f32>, label: bool) -> LabeledPair {
    LabeledPair {
        pair_id: format!("p{id:05}"),
        source_id: format!("s{id:05}"),
        a: ProbeInput::new(a),
        b: ProbeInput::new(b),
        label,
    }
}

/// Pairs whose label is the sign of `w_true . (a - b)` on Gaussian-ish inputs,
/// with label noise flipping a fraction `noise` of them.
pub fn linear_dataset(seed: u64, n: usize, w_true: &[f64], noise: f64) -> PairDataset {
    let d = w_true.len();
    let mut rng = derive_named(seed, "test-linear-dataset");
    let draw = |rng: &mut augrank::rng::StreamRng| -> Vec<f32> {
        (0..d)
            .map(|_| (rng.next_f64() + rng.next_f64() + rng.next_f64() - 1.5) as f32)
            .collect()
    };
    let pairs = (0..n)
        .map(|i| {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let m: f64 = w_true
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(w, (x, y))| w * (*x as f64 - *y as f64))
                .sum();
            let flip = rng.next_f64() < noise;
            pair(i, a, b, (m > 0.0) != flip)
        })
        .collect();
    PairDataset::new(DimMap::from_layers(&flat_layers(&[(d, 0)])), pairs).unwrap()
}
