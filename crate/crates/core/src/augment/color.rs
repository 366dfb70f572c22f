//! Photometric transforms. All outputs are clipped to `[0, 1]`.

use crate::types::ImageTensor;

/// BT.601 luma weights used by [`adjust_saturation`].
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn adjust_brightness(image: &ImageTensor, delta: f64) -> ImageTensor {
    image.map_pixels(|p| p.map(|v| (v as f64 + delta) as f32))
}

/// Blends every pixel toward its luma by factor `k` (`k = 0` is grayscale).
pub fn adjust_saturation(image: &ImageTensor, k: f64) -> ImageTensor {
    image.map_pixels(|p| {
        let gray = LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64;
        p.map(|v| (gray + k * (v as f64 - gray)) as f32)
    })
}

/// Scales each channel about its spatial mean by factor `k`.
pub fn adjust_contrast(image: &ImageTensor, k: f64) -> ImageTensor {
    let mut sums = [0.0f64; 3];
    for p in image.data().chunks_exact(3) {
        for c in 0..3 {
            sums[c] += p[c] as f64;
        }
    }
    let n = (image.height() * image.width()) as f64;
    let means = sums.map(|s| s / n);
    image.map_pixels(|p| {
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            out[c] = (means[c] + k * (p[c] as f64 - means[c])) as f32;
        }
        out
    })
}

/// Rotates hue by `delta` turns (wrapping mod 1) in HSV space.
pub fn adjust_hue(image: &ImageTensor, delta: f64) -> ImageTensor {
    image.map_pixels(|p| {
        let [h, s, v] = rgb_to_hsv([p[0] as f64, p[1] as f64, p[2] as f64]);
        hsv_to_rgb([(h + delta).rem_euclid(1.0), s, v]).map(|x| x as f32)
    })
}

/// RGB in `[0, 1]` to HSV with hue in `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, v];
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    [(sector / 6.0).rem_euclid(1.0), s, v]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(rgb: [f32; 3]) -> ImageTensor {
        ImageTensor::filled(1, 1, rgb)
    }

    fn close(a: [f32; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (*x as f64 - y).abs() <= tol)
    }

    #[test]
    fn brightness_cases() {
        assert_eq!(adjust_brightness(&px([0.5; 3]), 0.0), px([0.5; 3]));
        assert!(close(adjust_brightness(&px([0.5; 3]), 0.3).pixel(0, 0), [0.8; 3], 1e-6));
        assert_eq!(adjust_brightness(&px([0.9; 3]), 0.3).pixel(0, 0), [1.0; 3]);
    }

    #[test]
    fn saturation_cases() {
        let img = px([0.6, 0.3, 0.3]);
        assert_eq!(adjust_saturation(&img, 1.0).pixel(0, 0), [0.6, 0.3, 0.3]);
        assert!(close(
            adjust_saturation(&px([1.0, 0.0, 0.0]), 0.0).pixel(0, 0),
            [0.299; 3],
            1e-7
        ));
        // luma of (0.6, 0.3, 0.3) recomputed by hand: 0.1794 + 0.1761 + 0.0342
        let gray = 0.3897;
        let want = [
            gray + 1.5 * (0.6 - gray),
            gray + 1.5 * (0.3 - gray),
            gray + 1.5 * (0.3 - gray),
        ];
        assert!(close(adjust_saturation(&img, 1.5).pixel(0, 0), want, 1e-6));
        assert!((want[0] - 0.70515).abs() < 1e-9);
    }

    #[test]
    fn contrast_cases() {
        let img = ImageTensor::from_fn(1, 2, |_, x| if x == 0 { [0.2; 3] } else { [0.8; 3] });
        let out = adjust_contrast(&img, 0.5);
        assert!(close(out.pixel(0, 0), [0.35; 3], 1e-6));
        assert!(close(out.pixel(0, 1), [0.65; 3], 1e-6));
        let flat = ImageTensor::filled(3, 3, [0.1, 0.4, 0.7]);
        for k in [0.5, 1.0, 1.5] {
            let o = adjust_contrast(&flat, k);
            assert!(close(o.pixel(1, 1), [0.1, 0.4, 0.7], 1e-6));
        }
        assert_eq!(adjust_contrast(&img, 1.0), img);
    }

    #[test]
    fn hue_primary_rotation() {
        let red = px([1.0, 0.0, 0.0]);
        assert!(close(adjust_hue(&red, 1.0 / 3.0).pixel(0, 0), [0.0, 1.0, 0.0], 1e-6));
        assert!(close(adjust_hue(&red, 2.0 / 3.0).pixel(0, 0), [0.0, 0.0, 1.0], 1e-6));
        assert!(close(adjust_hue(&red, 0.0).pixel(0, 0), [1.0, 0.0, 0.0], 0.0));
    }

    #[test]
    fn hsv_round_trip_grid() {
        for r in 0..=4 {
            for g in 0..=4 {
                for b in 0..=4 {
                    let rgb = [r as f64 / 4.0, g as f64 / 4.0, b as f64 / 4.0];
                    let back = hsv_to_rgb(rgb_to_hsv(rgb));
                    for c in 0..3 {
                        assert!((back[c] - rgb[c]).abs() < 1e-12, "{rgb:?} -> {back:?}");
                    }
                }
            }
        }
    }
}
