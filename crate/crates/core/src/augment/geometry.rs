//! Crop-and-resize transforms.
//!
//! Resampling is bilinear with the half-pixel-center convention: output pixel
//! `j` of `n` samples the source at continuous pixel index
//! `x0 + (j + 0.5) * (x1 - x0) / n - 0.5`, where `[x0, x1)` is the crop window
//! in source pixel units and pixel `k` has its center at index `k`. Neighbour
//! indices are clamped to the image; no prefiltering is applied when
//! downsampling. Arithmetic is in `f64`, rounded once to `f32`.

use crate::error::{Error, Result};
use crate::types::{BoundingBox, ImageTensor, MODEL_INPUT_SIZE};

/// A crop window in source pixel units, `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropWindow {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Scales a normalized box to pixel units of `image`.
    pub fn from_normalized(bbox: &BoundingBox, image: &ImageTensor) -> Self {
        let (w, h) = (image.width() as f64, image.height() as f64);
        Self {
            x0: bbox.x_min * w,
            y0: bbox.y_min * h,
            x1: bbox.x_max * w,
            y1: bbox.y_max * h,
        }
    }
}

fn axis_taps(start: f64, extent: f64, out: usize, limit: usize) -> Vec<(usize, usize, f64)> {
    let step = extent / out as f64;
    let max = (limit - 1) as f64;
    (0..out)
        .map(|j| {
            let pos = (start + (j as f64 + 0.5) * step - 0.5).clamp(0.0, max);
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize;
            (lo, (lo + 1).min(limit - 1), frac)
        })
        .collect()
}

/// Crops `window` out of `image` and resizes it to `out_h x out_w`.
pub fn crop_resize(image: &ImageTensor, window: CropWindow, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if !(window.width() >= 2.0 && window.height() >= 2.0) {
        return Err(Error::DegenerateCrop {
            width: window.width(),
            height: window.height(),
        });
    }
    if window.x0 < -1e-9
        || window.y0 < -1e-9
        || window.x1 > image.width() as f64 + 1e-9
        || window.y1 > image.height() as f64 + 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "crop window {window:?} exceeds {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let xs = axis_taps(window.x0, window.width(), out_w, image.width());
    let ys = axis_taps(window.y0, window.height(), out_h, image.height());
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = image.get(y0, x0, c) as f64 * (1.0 - fx) + image.get(y0, x1, c) as f64 * fx;
                let bot = image.get(y1, x0, c) as f64 * (1.0 - fx) + image.get(y1, x1, c) as f64 * fx;
                data.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    Ok(ImageTensor::from_clipped(out_h, out_w, data))
}

/// Resizes the whole image.
pub fn resize(image: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    let window = CropWindow {
        x0: 0.0,
        y0: 0.0,
        x1: image.width() as f64,
        y1: image.height() as f64,
    };
    crop_resize(image, window, out_h, out_w)
}

/// Centered square crop resized to the model input size.
pub fn center_square(image: &ImageTensor) -> Result<ImageTensor> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let side = w.min(h);
    let window = CropWindow {
        x0: (w - side) / 2.0,
        y0: (h - side) / 2.0,
        x1: (w + side) / 2.0,
        y1: (h + side) / 2.0,
    };
    crop_resize(image, window, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
}

/// Window for a zoom-in: the box shrunk to `1 - trim` of its extent per axis, about its center.
pub fn zoom_in_window(image: &ImageTensor, bbox: &BoundingBox, trim: f64) -> Result<CropWindow> {
    if !(0.0..1.0).contains(&trim) {
        return Err(Error::InvalidArgument(format!(
            "zoom-in trim fraction {trim} outside [0, 1)"
        )));
    }
    bbox.validate()?;
    let b = CropWindow::from_normalized(bbox, image);
    let (cx, cy) = ((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0);
    let (hw, hh) = (b.width() * (1.0 - trim) / 2.0, b.height() * (1.0 - trim) / 2.0);
    Ok(CropWindow {
        x0: cx - hw,
        y0: cy - hh,
        x1: cx + hw,
        y1: cy + hh,
    })
}

pub fn zoom_in(image: &ImageTensor, bbox: &BoundingBox, trim: f64) -> Result<ImageTensor> {
    let window = zoom_in_window(image, bbox, trim)?;
    crop_resize(image, window, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
}

/// Largest admissible zoom-out margin for `bbox`.
pub fn zoom_out_limit(bbox: &BoundingBox) -> f64 {
    bbox.min_margin()
}

/// Window for a zoom-out: the box grown by `margin` (normalized units) on every side.
pub fn zoom_out_window(image: &ImageTensor, bbox: &BoundingBox, margin: f64) -> Result<CropWindow> {
    bbox.validate()?;
    let limit = zoom_out_limit(bbox);
    if margin < 0.0 || margin > limit + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "zoom-out margin {margin} outside [0, {limit}]"
        )));
    }
    let grown = BoundingBox::new_unchecked(
        (bbox.x_min - margin).max(0.0),
        (bbox.y_min - margin).max(0.0),
        (bbox.x_max + margin).min(1.0),
        (bbox.y_max + margin).min(1.0),
    );
    Ok(CropWindow::from_normalized(&grown, image))
}

pub fn zoom_out(image: &ImageTensor, bbox: &BoundingBox, margin: f64) -> Result<ImageTensor> {
    let window = zoom_out_window(image, bbox, margin)?;
    crop_resize(image, window, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
}

/// Fractions of width/height removed from each side.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trims {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl Trims {
    pub const NONE: Trims = Trims {
        left: 0.0,
        right: 0.0,
        top: 0.0,
        bottom: 0.0,
    };

    fn validate(&self) -> Result<()> {
        let all = [self.left, self.right, self.top, self.bottom];
        if all.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative or non-finite trim in {all:?}"
            )));
        }
        if self.left + self.right >= 1.0 || self.top + self.bottom >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "trims {all:?} remove the whole image along an axis"
            )));
        }
        Ok(())
    }

    /// Height over width of what remains of a `height x width` frame.
    pub fn ratio(&self, height: usize, width: usize) -> f64 {
        ((1.0 - self.top - self.bottom) * height as f64) / ((1.0 - self.left - self.right) * width as f64)
    }
}

/// Crops by `trims` and resizes; returns the image and its vertical/horizontal ratio.
pub fn aspect_ratio_crop(image: &ImageTensor, trims: Trims) -> Result<(ImageTensor, f64)> {
    trims.validate()?;
    let (w, h) = (image.width() as f64, image.height() as f64);
    let window = CropWindow {
        x0: trims.left * w,
        y0: trims.top * h,
        x1: (1.0 - trims.right) * w,
        y1: (1.0 - trims.bottom) * h,
    };
    let out = crop_resize(image, window, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)?;
    Ok((out, trims.ratio(image.height(), image.width())))
}
