//! Image, bounding-box and layer bookkeeping types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of every pipeline-facing image.
pub const MODEL_INPUT_SIZE: usize = 224;

/// An RGB image with `f32` samples in `[0, 1]`, stored row-major as `[y][x][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    /// Validating constructor. Rejects out-of-range or non-finite samples.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        let expected = height * width * Self::CHANNELS;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image by clipping every sample into `[0, 1]`; NaN maps to 0.
    pub fn from_clipped(height: usize, width: usize, mut data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * Self::CHANNELS);
        for v in &mut data {
            *v = clip01(*v);
        }
        Self { height, width, data }
    }

    /// Builds an image from a per-pixel function returning unclipped RGB.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(y, x).map(clip01));
            }
        }
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * Self::CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Applies `f` to every pixel and clips the result.
    pub fn map_pixels(&self, mut f: impl FnMut([f32; 3]) -> [f32; 3]) -> Self {
        let data = self
            .data
            .chunks_exact(Self::CHANNELS)
            .flat_map(|p| f([p[0], p[1], p[2]]).map(clip01))
            .collect();
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

#[inline]
pub(crate) fn clip01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Axis-aligned box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let bbox = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    /// Constructs without checking; pair with [`BoundingBox::validate`].
    pub fn new_unchecked(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument(format!(
                "bounding box {coords:?} has coordinates outside [0, 1]"
            )));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidArgument(format!(
                "bounding box {coords:?} has min >= max"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Smallest distance from any border of the box to the matching image edge.
    pub fn min_margin(&self) -> f64 {
        self.x_min.min(self.y_min).min(1.0 - self.x_max).min(1.0 - self.y_max)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// The augmentation ranking tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ZoomIn,
    ZoomOut,
    AspectRatio,
    Hue,
    Saturation,
    Contrast,
    Brightness,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::ZoomIn,
        TaskKind::ZoomOut,
        TaskKind::AspectRatio,
        TaskKind::Hue,
        TaskKind::Saturation,
        TaskKind::Contrast,
        TaskKind::Brightness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ZoomIn => "zoom_in",
            TaskKind::ZoomOut => "zoom_out",
            TaskKind::AspectRatio => "aspect_ratio",
            TaskKind::Hue => "hue",
            TaskKind::Saturation => "saturation",
            TaskKind::Contrast => "contrast",
            TaskKind::Brightness => "brightness",
        }
    }

    /// Whether the task crops around the bounding box or the full frame.
    pub fn is_geometric(self) -> bool {
        matches!(self, TaskKind::ZoomIn | TaskKind::ZoomOut | TaskKind::AspectRatio)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// Spatial extent of a stored layer tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpatialRepr", into = "SpatialRepr")]
pub enum Spatial {
    /// `C x H x W` values per sample.
    Raw { height: usize, width: usize },
    /// `C` values per sample, already reduced (or inherently flat).
    Pooled,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpatialRepr {
    Dims([usize; 2]),
    Tag(String),
}

impl TryFrom<SpatialRepr> for Spatial {
    type Error = String;

    fn try_from(r: SpatialRepr) -> std::result::Result<Self, String> {
        match r {
            SpatialRepr::Dims([height, width]) if height > 0 && width > 0 => Ok(Spatial::Raw { height, width }),
            SpatialRepr::Dims(d) => Err(format!("invalid spatial dims {d:?}")),
            SpatialRepr::Tag(t) if t == "pooled" => Ok(Spatial::Pooled),
            SpatialRepr::Tag(t) => Err(format!("invalid spatial tag `{t}`")),
        }
    }
}

impl From<Spatial> for SpatialRepr {
    fn from(s: Spatial) -> Self {
        match s {
            Spatial::Raw { height, width } => SpatialRepr::Dims([height, width]),
            Spatial::Pooled => SpatialRepr::Tag("pooled".into()),
        }
    }
}

/// Metadata for one tapped layer of a backbone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub name: String,
    pub channels: usize,
    pub block_id: u32,
    pub spatial: Spatial,
}

impl LayerMeta {
    pub fn pooled(name: impl Into<String>, channels: usize, block_id: u32) -> Self {
        Self {
            name: name.into(),
            channels,
            block_id,
            spatial: Spatial::Pooled,
        }
    }

    pub fn raw(name: impl Into<String>, channels: usize, block_id: u32, height: usize, width: usize) -> Self {
        Self {
            name: name.into(),
            channels,
            block_id,
            spatial: Spatial::Raw { height, width },
        }
    }

    /// Number of `f32` values stored per sample for this layer.
    pub fn stored_len(&self) -> usize {
        match self.spatial {
            Spatial::Raw { height, width } => self.channels * height * width,
            Spatial::Pooled => self.channels,
        }
    }
}

/// Checks name uniqueness, non-empty channels and monotone block ids.
pub fn validate_layers(layers: &[LayerMeta]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Bundle("no layers declared".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (i, layer) in layers.iter().enumerate() {
        if !seen.insert(layer.name.as_str()) {
            return Err(Error::Bundle(format!("duplicate layer name `{}`", layer.name)));
        }
        if layer.channels == 0 {
            return Err(Error::Bundle(format!("layer `{}` has zero channels", layer.name)));
        }
        if i > 0 && layer.block_id < layers[i - 1].block_id {
            return Err(Error::Bundle(format!(
                "block ids must be non-decreasing; `{}` has block {} after block {}",
                layer.name,
                layer.block_id,
                layers[i - 1].block_id
            )));
        }
    }
    Ok(())
}
