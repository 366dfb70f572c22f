//! Augmentation families, the dataset filter and ranked pair generation.
//!
//! Every pair draws two parameters for one task from a [`SeedSpec`]-derived
//! stream, applies the transform to the same source image twice and labels
//! the pair by whether the first ranking value exceeds the second. Ranking
//! values are oriented so that "greater" means more of the attribute; for
//! zoom-out the value is the negated margin so that, as with zoom-in, a
//! greater value means a larger apparent object.

pub mod color;
pub mod filter;
pub mod geometry;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, SeedSpec, StreamRng};
use crate::types::{BoundingBox, ImageTensor, TaskKind};

pub use color::{adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation};
pub use filter::{filter_record, FilterDecision, RejectReason};
pub use geometry::{aspect_ratio_crop, center_square, zoom_in, zoom_out, Trims};

pub const ZOOM_IN_RANGE: (f64, f64) = (0.5, 0.9);
pub const ZOOM_OUT_MIN: f64 = 0.1;
pub const ASPECT_TRIM_RANGE: (f64, f64) = (0.0, 0.4);
pub const HUE_RANGE: (f64, f64) = (-0.2, 0.2);
pub const SATURATION_RANGE: (f64, f64) = (0.5, 1.5);
pub const CONTRAST_RANGE: (f64, f64) = (0.5, 1.5);
pub const DEFAULT_BRIGHTNESS_RANGE: (f64, f64) = (-0.3, 0.3);

const MAX_TIE_REDRAWS: usize = 64;

/// Whether the hue task ranks the signed delta or its magnitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HueMode {
    #[default]
    Signed,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub brightness_range: (f64, f64),
    pub hue_mode: HueMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            brightness_range: DEFAULT_BRIGHTNESS_RANGE,
            hue_mode: HueMode::Signed,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.brightness_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid brightness range ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// The transform argument actually applied to the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformArg {
    Scalar(f64),
    Trims(Trims),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugParams {
    pub task: TaskKind,
    /// Ranking value; larger means more of the attribute.
    pub value: f64,
    pub arg: TransformArg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugPair {
    pub image_a: ImageTensor,
    pub image_b: ImageTensor,
    pub params_a: AugParams,
    pub params_b: AugParams,
    pub label: bool,
    pub source_id: String,
}

/// One line of a dataset manifest (after filtering: exactly one box).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub path: String,
    pub bbox: BoundingBox,
}

/// A decoded source image with its box.
#[derive(Clone, Debug)]
pub struct SourceImage {
    pub id: String,
    pub image: ImageTensor,
    pub bbox: BoundingBox,
}

fn draw_params(task: TaskKind, source: &SourceImage, cfg: &AugmentConfig, rng: &mut StreamRng) -> Result<AugParams> {
    let scalar = |value: f64, arg: f64| AugParams {
        task,
        value,
        arg: TransformArg::Scalar(arg),
    };
    let p = match task {
        TaskKind::ZoomIn => {
            let f = rng.uniform(ZOOM_IN_RANGE.0, ZOOM_IN_RANGE.1);
            scalar(f, f)
        }
        TaskKind::ZoomOut => {
            let limit = geometry::zoom_out_limit(&source.bbox);
            if limit < ZOOM_OUT_MIN {
                return Err(Error::InvalidArgument(format!(
                    "zoom-out limit {limit:.4} is below the minimum margin {ZOOM_OUT_MIN}"
                )));
            }
            let m = rng.uniform(ZOOM_OUT_MIN, limit);
            scalar(-m, m)
        }
        TaskKind::AspectRatio => {
            let (lo, hi) = ASPECT_TRIM_RANGE;
            let trims = Trims {
                left: rng.uniform(lo, hi),
                right: rng.uniform(lo, hi),
                top: rng.uniform(lo, hi),
                bottom: rng.uniform(lo, hi),
            };
            AugParams {
                task,
                value: trims.ratio(source.image.height(), source.image.width()),
                arg: TransformArg::Trims(trims),
            }
        }
        TaskKind::Hue => {
            let h = rng.uniform(HUE_RANGE.0, HUE_RANGE.1);
            match cfg.hue_mode {
                HueMode::Signed => scalar(h, h),
                HueMode::Absolute => scalar(h.abs(), h),
            }
        }
        TaskKind::Saturation => {
            let k = rng.uniform(SATURATION_RANGE.0, SATURATION_RANGE.1);
            scalar(k, k)
        }
        TaskKind::Contrast => {
            let k = rng.uniform(CONTRAST_RANGE.0, CONTRAST_RANGE.1);
            scalar(k, k)
        }
        TaskKind::Brightness => {
            let d = rng.uniform(cfg.brightness_range.0, cfg.brightness_range.1);
            scalar(d, d)
        }
    };
    Ok(p)
}

/// Draws the two parameter sets of a pair, redrawing the second on an exact tie.
pub fn sample_pair_params(
    task: TaskKind,
    source: &SourceImage,
    cfg: &AugmentConfig,
    rng: &mut StreamRng,
) -> Result<(AugParams, AugParams)> {
    let a = draw_params(task, source, cfg, rng)?;
    for _ in 0..MAX_TIE_REDRAWS {
        let b = draw_params(task, source, cfg, rng)?;
        if b.value != a.value {
            return Ok((a, b));
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw two distinct {task} values"
    )))
}

/// Applies one parameter set. Color tasks expect the prepared square input
/// from [`prepare_source`].
pub fn apply_params(prepared: &ImageTensor, bbox: &BoundingBox, params: &AugParams) -> Result<ImageTensor> {
    let scalar = match params.arg {
        TransformArg::Scalar(v) => Some(v),
        TransformArg::Trims(_) => None,
    };
    let need_scalar =
        || scalar.ok_or_else(|| Error::InvalidArgument(format!("{} expects a scalar parameter", params.task)));
    match params.task {
        TaskKind::ZoomIn => zoom_in(prepared, bbox, need_scalar()?),
        TaskKind::ZoomOut => zoom_out(prepared, bbox, need_scalar()?),
        TaskKind::AspectRatio => match params.arg {
            TransformArg::Trims(t) => Ok(aspect_ratio_crop(prepared, t)?.0),
            TransformArg::Scalar(_) => Err(Error::InvalidArgument("aspect ratio expects trims".into())),
        },
        TaskKind::Hue => Ok(adjust_hue(prepared, need_scalar()?)),
        TaskKind::Saturation => Ok(adjust_saturation(prepared, need_scalar()?)),
        TaskKind::Contrast => Ok(adjust_contrast(prepared, need_scalar()?)),
        TaskKind::Brightness => Ok(adjust_brightness(prepared, need_scalar()?)),
    }
}

/// Geometric tasks work on the original frame; color tasks on its centered
/// square resized to the model input size.
pub fn prepare_source(task: TaskKind, image: &ImageTensor) -> Result<ImageTensor> {
    if task.is_geometric() {
        Ok(image.clone())
    } else {
        center_square(image)
    }
}

/// Generates the ordered pair for `spec` from `source`.
pub fn make_pair(source: &SourceImage, task: TaskKind, spec: &SeedSpec, cfg: &AugmentConfig) -> Result<AugPair> {
    let annotate = |e: Error| Error::Source {
        source_id: source.id.clone(),
        inner: Box::new(e),
    };
    let mut rng = derive_rng(spec);
    let (params_a, params_b) = sample_pair_params(task, source, cfg, &mut rng).map_err(annotate)?;
    let prepared = prepare_source(task, &source.image).map_err(annotate)?;
    let image_a = apply_params(&prepared, &source.bbox, &params_a).map_err(annotate)?;
    let image_b = apply_params(&prepared, &source.bbox, &params_b).map_err(annotate)?;
    Ok(AugPair {
        image_a,
        image_b,
        label: params_a.value > params_b.value,
        params_a,
        params_b,
        source_id: source.id.clone(),
    })
}
