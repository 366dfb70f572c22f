//! Synthetic single-object scenes with bounding boxes.
//!
//! Each scene is a cool-toned, softly shaded background with one warm,
//! finely textured rectangular object whose box satisfies the dataset
//! filter (extent and edge distance at least 30% of the frame).

use std::path::{Path, PathBuf};

use crate::augment::color::hsv_to_rgb;
use crate::augment::DatasetRecord;
use crate::error::Result;
use crate::io::{create_dir, save_png, write_jsonl};
use crate::rng::{derive_named, StreamRng};
use crate::types::{BoundingBox, ImageTensor};

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub image: ImageTensor,
    pub bbox: BoundingBox,
}

fn wave(rng: &mut StreamRng, lo: f64, hi: f64) -> (f64, f64, f64) {
    (
        rng.uniform(lo, hi),
        rng.uniform(lo, hi),
        rng.uniform(0.0, std::f64::consts::TAU),
    )
}

/// Renders scene `index` of a `size x size` dataset.
pub fn scene(seed: u64, index: usize, size: usize) -> SynthScene {
    let mut rng = derive_named(seed, &format!("synth-scene/{index}"));
    let bw = rng.uniform(0.3, 0.4);
    let bh = rng.uniform(0.3, 0.4);
    let x0 = rng.uniform(0.3, 0.7 - bw);
    let y0 = rng.uniform(0.3, 0.7 - bh);
    let bbox = BoundingBox::new_unchecked(x0, y0, x0 + bw, y0 + bh);

    let bg = [rng.uniform(0.50, 0.62), rng.uniform(0.25, 0.5), rng.uniform(0.45, 0.7)];
    let (bfx, bfy, bphase) = wave(&mut rng, 0.5, 2.0);
    let obj = [rng.uniform(0.0, 0.1), rng.uniform(0.55, 0.85), rng.uniform(0.55, 0.85)];
    let (px, py, ophase) = wave(&mut rng, 3.0, 7.0);
    let grain = rng.uniform(0.03, 0.08);

    let n = size as f64;
    let mut noise = derive_named(seed, &format!("synth-noise/{index}"));
    let image = ImageTensor::from_fn(size, size, |y, x| {
        let (u, v) = ((x as f64 + 0.5) / n, (y as f64 + 0.5) / n);
        let jitter = grain * (noise.next_f64() - 0.5);
        let inside = u >= bbox.x_min && u < bbox.x_max && v >= bbox.y_min && v < bbox.y_max;
        let hsv = if inside {
            let tex =
                (std::f64::consts::TAU * x as f64 / px + ophase).sin() * (std::f64::consts::TAU * y as f64 / py).sin();
            [obj[0], obj[1], obj[2] * (1.0 + 0.25 * tex) + jitter]
        } else {
            let shade = (std::f64::consts::TAU * (bfx * u + bfy * v) + bphase).sin();
            [bg[0], bg[1], bg[2] * (1.0 + 0.15 * shade) + jitter]
        };
        hsv_to_rgb([hsv[0], hsv[1], hsv[2].clamp(0.0, 1.0)]).map(|c| c as f32)
    });
    SynthScene { image, bbox }
}

/// Writes `count` scenes as PNGs plus `manifest.jsonl` into `dir`; returns
/// the manifest path.
pub fn write_dataset(dir: &Path, count: usize, seed: u64, size: usize) -> Result<PathBuf> {
    create_dir(dir)?;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let s = scene(seed, i, size);
        let id = format!("img{i:05}");
        let file = format!("{id}.png");
        save_png(&s.image, &dir.join(&file))?;
        records.push(DatasetRecord {
            id,
            path: file,
            bbox: s.bbox,
        });
    }
    let manifest = dir.join("manifest.jsonl");
    write_jsonl(&manifest, &records)?;
    Ok(manifest)
}
