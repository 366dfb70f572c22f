//! Layer importance from probe weights and activation spread, and the
//! single-block ablation driver.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{evaluate, train, DimMap, FeatureStats, PairDataset, RankProbe, TrainConfig};
use crate::types::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Max,
}

impl Aggregation {
    pub const BOTH: [Aggregation; 2] = [Aggregation::Mean, Aggregation::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::Config(format!("unknown aggregation `{other}` (mean|max)"))),
        }
    }
}

/// `r_d = |w_d| * sigma_d`, with `w_d` the weight on the raw feature and
/// `sigma_d` the raw training-split standard deviation.
pub fn dimension_importance(probe: &RankProbe, stats: &FeatureStats) -> Result<Vec<f64>> {
    if stats.std.len() != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            actual: stats.std.len(),
        });
    }
    Ok(probe
        .raw_weights()
        .iter()
        .zip(&stats.std)
        .map(|(w, s)| if *s == 0.0 { 0.0 } else { w.abs() * s })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerImportance {
    pub layer: String,
    pub block_id: u32,
    pub channels: usize,
    pub mean: f64,
    pub max: f64,
    pub mean_share: f64,
    pub max_share: f64,
}

impl LayerImportance {
    pub fn raw(&self, mode: Aggregation) -> f64 {
        match mode {
            Aggregation::Mean => self.mean,
            Aggregation::Max => self.max,
        }
    }

    pub fn share(&self, mode: Aggregation) -> f64 {
        match mode {
            Aggregation::Mean => self.mean_share,
            Aggregation::Max => self.max_share,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub task: TaskKind,
    pub dims: Vec<f64>,
    pub layers: Vec<LayerImportance>,
}

impl ImportanceReport {
    pub fn shares(&self, mode: Aggregation) -> Vec<f64> {
        self.layers.iter().map(|l| l.share(mode)).collect()
    }
}

fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "layer importances sum to {total}; cannot normalize"
        )));
    }
    Ok(values.iter().map(|v| v / total).collect())
}

/// Aggregates per-dimension importance into per-layer mean and max over
/// channels, each normalized to sum to one across layers.
pub fn layer_importance(task: TaskKind, dims: &[f64], dim_map: &DimMap) -> Result<ImportanceReport> {
    if dims.len() != dim_map.len() {
        return Err(Error::DimensionMismatch {
            expected: dim_map.len(),
            actual: dims.len(),
        });
    }
    if let Some(v) = dims.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("negative or NaN importance {v}")));
    }
    let mut layers: Vec<LayerImportance> = Vec::new();
    for (r, entry) in dims.iter().zip(&dim_map.0) {
        let idx = match layers.iter().position(|l| l.layer == entry.layer) {
            Some(i) => i,
            None => {
                layers.push(LayerImportance {
                    layer: entry.layer.clone(),
                    block_id: entry.block_id,
                    channels: 0,
                    mean: 0.0,
                    max: 0.0,
                    mean_share: 0.0,
                    max_share: 0.0,
                });
                layers.len() - 1
            }
        };
        let l = &mut layers[idx];
        l.channels += 1;
        l.mean += r;
        l.max = l.max.max(*r);
    }
    if let Some(empty) = layers.iter().find(|l| l.channels == 0) {
        return Err(Error::InvalidArgument(format!(
            "layer `{}` has no dimensions",
            empty.layer
        )));
    }
    for l in &mut layers {
        l.mean /= l.channels as f64;
    }
    let means = normalize(&layers.iter().map(|l| l.mean).collect::<Vec<_>>())?;
    let maxes = normalize(&layers.iter().map(|l| l.max).collect::<Vec<_>>())?;
    for ((l, m), x) in layers.iter_mut().zip(means).zip(maxes) {
        l.mean_share = m;
        l.max_share = x;
    }
    Ok(ImportanceReport {
        task,
        dims: dims.to_vec(),
        layers,
    })
}

/// Importance report for a trained probe, with spread measured on `train`.
pub fn probe_importance(task: TaskKind, probe: &RankProbe, train: &PairDataset) -> Result<ImportanceReport> {
    let stats = FeatureStats::from_pairs(train)?;
    let dims = dimension_importance(probe, &stats)?;
    layer_importance(task, &dims, &probe.dim_map)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub block_id: u32,
    pub dims: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Trains and evaluates one probe per block, using only that block's dimensions.
pub fn block_ablation(
    train_set: &PairDataset,
    val_set: &PairDataset,
    blocks: &[u32],
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(blocks.len());
    for &block in blocks {
        let view = train_set.dim_map.restrict_to_block(block)?;
        let tr = train_set.restrict(&view);
        let va = val_set.restrict(&view);
        let (probe, log) = train(&tr, cfg)?;
        rows.push(AblationRow {
            block_id: block,
            dims: view.indices.len(),
            train_accuracy: log.train_accuracy,
            val_accuracy: evaluate(&probe, &va.pairs)?,
        });
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const IMPORTANCE_CSV_HEADER: &str = "task,layer,block,mode,raw,share";

/// CSV rows `task,layer,block,mode,raw,share` for the given modes.
pub fn importance_csv(reports: &[ImportanceReport], modes: &[Aggregation]) -> String {
    let mut out = String::from(IMPORTANCE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for &mode in modes {
            for l in &r.layers {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.12e},{:.12}",
                    r.task,
                    csv_field(&l.layer),
                    l.block_id,
                    mode.as_str(),
                    l.raw(mode),
                    l.share(mode)
                );
            }
        }
    }
    out
}

pub fn ablation_csv(task: TaskKind, rows: &[AblationRow]) -> String {
    let mut out = String::from("task,block,dims,train_accuracy,val_accuracy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{task},{},{},{:.6},{:.6}",
            r.block_id, r.dims, r.train_accuracy, r.val_accuracy
        );
    }
    out
}

/// A layers x tasks grid of shares, as read back from importance CSVs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShareGrid {
    pub layers: Vec<String>,
    pub tasks: Vec<String>,
    /// `values[layer][task]`; missing cells are `None`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ShareGrid {
    pub fn from_reports(reports: &[ImportanceReport], mode: Aggregation) -> Self {
        let mut grid = ShareGrid::default();
        for r in reports {
            grid.insert(
                r.task.as_str(),
                &r.layers
                    .iter()
                    .map(|l| (l.layer.clone(), l.share(mode)))
                    .collect::<Vec<_>>(),
            );
        }
        grid
    }

    pub fn insert(&mut self, task: &str, cells: &[(String, f64)]) {
        let t = match self.tasks.iter().position(|x| x == task) {
            Some(t) => t,
            None => {
                self.tasks.push(task.to_string());
                self.values.iter_mut().for_each(|row| row.push(None));
                self.tasks.len() - 1
            }
        };
        for (layer, v) in cells {
            let l = match self.layers.iter().position(|x| x == layer) {
                Some(l) => l,
                None => {
                    self.layers.push(layer.clone());
                    self.values.push(vec![None; self.tasks.len()]);
                    self.layers.len() - 1
                }
            };
            self.values[l][t] = Some(*v);
        }
    }

    /// Parses an importance CSV, keeping rows of `mode`.
    pub fn from_csv(text: &str, mode: Aggregation) -> Result<Self> {
        let mut grid = ShareGrid::default();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == IMPORTANCE_CSV_HEADER => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unexpected importance CSV header {other:?}"
                )))
            }
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields = split_csv_line(line);
            if fields.len() != 6 {
                return Err(Error::InvalidArgument(format!("malformed importance CSV row `{line}`")));
            }
            if fields[3] != mode.as_str() {
                continue;
            }
            let share: f64 = fields[5]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad share in `{line}`")))?;
            grid.insert(&fields[0], &[(fields[1].clone(), share)]);
        }
        Ok(grid)
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

const CELL: u32 = 16;

fn heat(v: f64) -> [u8; 3] {
    // black -> red -> yellow -> white
    let t = v.clamp(0.0, 1.0) * 3.0;
    let r = t.min(1.0);
    let g = (t - 1.0).clamp(0.0, 1.0);
    let b = (t - 2.0).clamp(0.0, 1.0);
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Renders the grid as a PNG heatmap: one row per layer, one column per task,
/// brightness proportional to share relative to the largest share. Missing
/// cells are drawn mid-gray.
pub fn render_heatmap(grid: &ShareGrid, path: &Path) -> Result<()> {
    if grid.layers.is_empty() || grid.tasks.is_empty() {
        return Err(Error::InvalidArgument("empty importance grid".into()));
    }
    let peak = grid.values.iter().flatten().flatten().fold(0.0f64, |a, &b| a.max(b));
    let (w, h) = (grid.tasks.len() as u32 * CELL, grid.layers.len() as u32 * CELL);
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        let (t, l) = ((x / CELL) as usize, (y / CELL) as usize);
        let rgb = match grid.values[l][t] {
            Some(v) if peak > 0.0 => heat(v / peak),
            Some(_) => heat(0.0),
            None => [128, 128, 128],
        };
        image::Rgb(rgb)
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}
