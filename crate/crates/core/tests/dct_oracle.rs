use std::f64::consts::PI;

use augrank::baseline::{band_energy, dct_8x8, dct_features, to_zigzag, zigzag_order, BLOCK, COEFFS};
use augrank::rng::derive_named;
use augrank::ImageTensor;
use proptest::prelude::*;

/// Direct O(N^4) orthonormal DCT-II.
fn naive_dct(patch: &[f64; COEFFS]) -> [f64; COEFFS] {
    let n = BLOCK as f64;
    let alpha = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    let mut out = [0.0; COEFFS];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut acc = 0.0;
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    acc += patch[y * BLOCK + x]
                        * ((2 * y + 1) as f64 * u as f64 * PI / (2.0 * n)).cos()
                        * ((2 * x + 1) as f64 * v as f64 * PI / (2.0 * n)).cos();
                }
            }
            out[u * BLOCK + v] = alpha(u) * alpha(v) * acc;
        }
    }
    out
}

/// Zig-zag order generated by walking anti-diagonals, alternating direction.
fn diagonal_walk() -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(COEFFS);
    for s in 0..(2 * BLOCK - 1) {
        let mut cells: Vec<(usize, usize)> = (0..BLOCK)
            .filter_map(|r| s.checked_sub(r).filter(|&c| c < BLOCK).map(|c| (r, c)))
            .collect();
        // even diagonals run bottom-left to top-right
        if s % 2 == 0 {
            cells.reverse();
        }
        order.extend(cells);
    }
    order
}

fn random_patch(rng: &mut augrank::rng::StreamRng) -> [f64; COEFFS] {
    let mut p = [0.0; COEFFS];
    p.iter_mut().for_each(|v| *v = rng.next_f64());
    p
}

#[test]
fn separable_dct_matches_direct_summation() {
    let mut rng = derive_named(11, "dct-oracle");
    for _ in 0..1000 {
        let p = random_patch(&mut rng);
        let fast = dct_8x8(&p);
        let slow = naive_dct(&p);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn dct_is_linear() {
    let mut rng = derive_named(12, "dct-linear");
    for _ in 0..100 {
        let (p, q) = (random_patch(&mut rng), random_patch(&mut rng));
        let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        let mut mix = [0.0; COEFFS];
        for i in 0..COEFFS {
            mix[i] = a * p[i] + b * q[i];
        }
        let (dp, dq, dm) = (dct_8x8(&p), dct_8x8(&q), dct_8x8(&mix));
        for i in 0..COEFFS {
            assert!((dm[i] - (a * dp[i] + b * dq[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn zigzag_matches_diagonal_walk() {
    let walk = diagonal_walk();
    assert_eq!(walk.len(), COEFFS);
    for (i, &cell) in walk.iter().enumerate() {
        assert_eq!(zigzag_order(i).unwrap(), cell, "index {i}");
    }
    assert!(zigzag_order(COEFFS).is_err());
    let mut seen = [false; COEFFS];
    for i in 0..COEFFS {
        let (r, c) = zigzag_order(i).unwrap();
        assert!(!seen[r * BLOCK + c]);
        seen[r * BLOCK + c] = true;
    }
}

#[test]
fn zigzag_known_prefix() {
    let expect = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2)];
    for (i, e) in expect.iter().enumerate() {
        assert_eq!(zigzag_order(i).unwrap(), *e);
    }
    assert_eq!(zigzag_order(63).unwrap(), (7, 7));
}

#[test]
fn constant_patch_is_dc_only() {
    let c = dct_8x8(&[0.5; COEFFS]);
    assert!((c[0] - 4.0).abs() < 1e-12);
    assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn checkerboard_lands_in_highest_frequency() {
    let mut p = [0.0; COEFFS];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            p[y * BLOCK + x] = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    let zz = to_zigzag(&dct_8x8(&p));
    let (peak, _) = zz
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert_eq!(peak, 63);
}

#[test]
fn pooled_features_shape_and_padding() {
    let img = ImageTensor::filled(12, 20, [0.25, 0.5, 1.0]);
    let f = dct_features(&img);
    assert_eq!((f.patches_y, f.patches_x), (2, 3));
    assert_eq!(f.pooled.len(), 3 * COEFFS);
    // full 8x8 constant patch: DC = 8 * value; padded patches are smaller
    let full = to_zigzag(&dct_8x8(&[0.5; COEFFS]))[0];
    assert!((f.coefficients[1][0][0] - full).abs() < 1e-12);
    assert!(f.coefficients[1][5][0] < full);
}

#[test]
fn band_energy_averages_channels() {
    let mut pooled = vec![0.0f32; 3 * COEFFS];
    for c in 0..3 {
        for i in 32..64 {
            pooled[c * COEFFS + i] = (c + 1) as f32;
        }
    }
    assert!((band_energy(&pooled, 32..64) - 2.0).abs() < 1e-12);
    assert_eq!(band_energy(&pooled, 0..32), 0.0);
}

proptest! {
    #[test]
    fn parseval_holds(values in prop::collection::vec(-1.0f64..1.0, COEFFS)) {
        let mut p = [0.0; COEFFS];
        p.copy_from_slice(&values);
        let c = dct_8x8(&p);
        let e_in: f64 = p.iter().map(|v| v * v).sum();
        let e_out: f64 = c.iter().map(|v| v * v).sum();
        prop_assert!((e_in - e_out).abs() < 1e-9);
    }
}
