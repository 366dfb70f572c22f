//! Analytic backbones: raw-pixel passthrough and 8x8 patchwise DCT.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::types::{ImageTensor, LayerMeta};

pub const BLOCK: usize = 8;
pub const COEFFS: usize = BLOCK * BLOCK;

pub const DCT_LAYER: &str = "dct_pooled";
pub const PASSTHROUGH_LAYER: &str = "passthrough";

/// Natural (row-major) index of each zig-zag position.
const ZIGZAG: [u8; COEFFS] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54,
    47, 55, 62, 63,
];

/// `(row, col)` of zig-zag position `index`.
pub fn zigzag_order(index: usize) -> Result<(usize, usize)> {
    let natural = *ZIGZAG
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("zig-zag index {index} outside 0..64")))?
        as usize;
    Ok((natural / BLOCK, natural % BLOCK))
}

/// Orthonormal DCT-II basis, `basis[k][n] = a(k) cos(pi (2n + 1) k / 16)`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (k, row) in m.iter_mut().enumerate() {
            let scale = if k == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * BLOCK) as f64).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of a row-major 8x8 patch, returned row-major.
///
/// Computed separably (rows, then columns).
pub fn dct_8x8(patch: &[f64; COEFFS]) -> [f64; COEFFS] {
    let b = basis();
    let mut rows = [0.0; COEFFS];
    for y in 0..BLOCK {
        for k in 0..BLOCK {
            let mut acc = 0.0;
            for x in 0..BLOCK {
                acc += b[k][x] * patch[y * BLOCK + x];
            }
            rows[y * BLOCK + k] = acc;
        }
    }
    let mut out = [0.0; COEFFS];
    for u in 0..BLOCK {
        for k in 0..BLOCK {
            let mut acc = 0.0;
            for y in 0..BLOCK {
                acc += b[u][y] * rows[y * BLOCK + k];
            }
            out[u * BLOCK + k] = acc;
        }
    }
    out
}

/// Reorders a row-major coefficient block into zig-zag order.
pub fn to_zigzag(coeffs: &[f64; COEFFS]) -> [f64; COEFFS] {
    let mut out = [0.0; COEFFS];
    for (i, &nat) in ZIGZAG.iter().enumerate() {
        out[i] = coeffs[nat as usize];
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DctFeatures {
    pub patches_y: usize,
    pub patches_x: usize,
    /// Zig-zag ordered coefficients, indexed `[channel][patch_y * patches_x + patch_x]`.
    pub coefficients: Vec<Vec<[f64; COEFFS]>>,
    /// Mean absolute coefficient per zig-zag index, channel-major (`3 * 64` values).
    pub pooled: Vec<f32>,
}

impl DctFeatures {
    pub fn num_patches(&self) -> usize {
        self.patches_y * self.patches_x
    }
}

/// Per-channel patchwise DCT; edge patches are zero-padded.
pub fn dct_features(image: &ImageTensor) -> DctFeatures {
    let patches_y = image.height().div_ceil(BLOCK);
    let patches_x = image.width().div_ceil(BLOCK);
    let mut coefficients = Vec::with_capacity(3);
    let mut pooled = Vec::with_capacity(3 * COEFFS);
    for c in 0..3 {
        let mut blocks = Vec::with_capacity(patches_y * patches_x);
        let mut sums = [0.0f64; COEFFS];
        for py in 0..patches_y {
            for px in 0..patches_x {
                let mut patch = [0.0; COEFFS];
                for dy in 0..BLOCK {
                    let y = py * BLOCK + dy;
                    if y >= image.height() {
                        break;
                    }
                    for dx in 0..BLOCK {
                        let x = px * BLOCK + dx;
                        if x >= image.width() {
                            break;
                        }
                        patch[dy * BLOCK + dx] = image.get(y, x, c) as f64;
                    }
                }
                let zz = to_zigzag(&dct_8x8(&patch));
                for (s, v) in sums.iter_mut().zip(zz.iter()) {
                    *s += v.abs();
                }
                blocks.push(zz);
            }
        }
        let n = blocks.len() as f64;
        pooled.extend(sums.iter().map(|s| (s / n) as f32));
        coefficients.push(blocks);
    }
    DctFeatures {
        patches_y,
        patches_x,
        coefficients,
        pooled,
    }
}

/// Row-major flattened pixels.
pub fn passthrough_features(image: &ImageTensor) -> Vec<f32> {
    image.data().to_vec()
}

/// Inverse of [`passthrough_features`].
pub fn passthrough_to_image(features: &[f32], height: usize, width: usize) -> Result<ImageTensor> {
    ImageTensor::new(height, width, features.to_vec())
}

/// Layer descriptor for the pooled DCT features.
pub fn dct_layer() -> LayerMeta {
    LayerMeta::pooled(DCT_LAYER, 3 * COEFFS, 0)
}

/// Layer descriptor for passthrough pixels of a `height x width` image. The
/// layer is stored flat, so pooling leaves it untouched.
pub fn passthrough_layer(height: usize, width: usize) -> LayerMeta {
    LayerMeta::pooled(PASSTHROUGH_LAYER, height * width * 3, 0)
}

/// Mean pooled DCT magnitude over zig-zag indices `range`, averaged over channels.
pub fn band_energy(pooled: &[f32], range: std::ops::Range<usize>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for channel in pooled.chunks_exact(COEFFS) {
        for &v in &channel[range.clone()] {
            total += v as f64;
            n += 1;
        }
    }
    total / n as f64
}
