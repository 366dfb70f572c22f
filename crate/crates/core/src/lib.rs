//! Pairwise ranking probes that locate augmentation signals in image features.
//!
//! The crate generates ranked augmentation pairs from single-object images,
//! computes baseline features (raw pixels and pooled 8x8 DCT magnitudes),
//! reads and writes the activation bundle format used to import features
//! from external backbones, trains linear pairwise-rank probes, and reports
//! per-layer importance and single-block ablations.

pub mod augment;
pub mod baseline;
pub mod error;
pub mod exchange;
pub mod importance;
pub mod io;
pub mod pipeline;
pub mod probe;
pub mod rng;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorClass, Result};
pub use exchange::{Bundle, BundleWriter, Role, SampleEntry};
pub use pipeline::{run_experiment, Backbone, ExperimentConfig, ExperimentReport};
pub use probe::{evaluate, train, PairDataset, RankProbe, TrainConfig};
pub use types::{BoundingBox, ImageTensor, LayerMeta, Spatial, TaskKind};
