//! Experiment orchestration.
//!
//! Stages, each usable on its own (the CLI exposes one subcommand per stage):
//! filter → pairs → features → train → eval → importance → ablation → report.
//! [`run_experiment`] chains them into one output directory. All randomness
//! derives from the experiment seed; artifacts carry no timestamps, so a
//! rerun with the same configuration reproduces every file byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    filter_record, make_pair, AugmentConfig, DatasetRecord, FilterDecision, RejectReason, SourceImage,
};
use crate::baseline::{dct_features, dct_layer, passthrough_features, passthrough_layer};
use crate::error::{Error, Result};
use crate::exchange::{ActivationManifest, Bundle, BundleWriter, Role, SampleEntry};
use crate::importance::{
    ablation_csv, block_ablation, importance_csv, probe_importance, render_heatmap, AblationRow, Aggregation,
    ImportanceReport, ShareGrid,
};
use crate::io::{create_dir, load_png, png_dims, read_json, read_jsonl, save_png, write_json, write_jsonl};
use crate::probe::{
    evaluate, pool_activations, train, DimMap, LabeledPair, PairDataset, RankProbe, Stamp, TrainConfig,
};
use crate::rng::{derive_named, SeedSpec};
use crate::types::{BoundingBox, TaskKind};

/// Feature source for the probe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backbone {
    Passthrough,
    Dct,
    /// An externally exported activation bundle.
    Bundle(PathBuf),
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passthrough" => Ok(Backbone::Passthrough),
            "dct" => Ok(Backbone::Dct),
            _ => match s.strip_prefix("bundle:") {
                Some(p) if !p.is_empty() => Ok(Backbone::Bundle(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown backbone `{s}` (passthrough | dct | bundle:<path>)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backbone::Passthrough => f.write_str("passthrough"),
            Backbone::Dct => f.write_str("dct"),
            Backbone::Bundle(p) => write!(f, "bundle:{}", p.display()),
        }
    }
}

impl Serialize for Backbone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Backbone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.75, val: 0.25 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && ((self.train + self.val) - 1.0).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {} / {}",
                self.train, self.val
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSON Lines dataset manifest; image paths are relative to its directory.
    pub dataset: PathBuf,
    pub tasks: Vec<TaskKind>,
    pub backbone: Backbone,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub split: SplitFractions,
    pub experiment_seed: u64,
    pub pairs_per_image: u32,
    /// Blocks for the single-block ablation; `None` runs every block when the
    /// features span more than one.
    pub ablation_blocks: Option<Vec<u32>>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            tasks: Vec::new(),
            backbone: Backbone::Passthrough,
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            split: SplitFractions::default(),
            experiment_seed: 0,
            pairs_per_image: 1,
            ablation_blocks: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks configured".into()));
        }
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("no dataset manifest configured".into()));
        }
        if self.pairs_per_image == 0 {
            return Err(Error::Config("pairs_per_image must be at least 1".into()));
        }
        self.split.validate()?;
        self.train.validate()?;
        self.augment.validate()
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    pub fn stamp(&self) -> Stamp {
        Stamp {
            config_hash: self.hash(),
            experiment_seed: self.experiment_seed,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn stamp_line(stamp: &Stamp) -> String {
    format!(
        "# config_hash={} experiment_seed={}\n",
        stamp.config_hash, stamp.experiment_seed
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    {
        return Err(Error::InvalidArgument(format!(
            "record id `{id}` must be non-empty and use only [A-Za-z0-9._-]"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// filter

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    path: String,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    bboxes: Option<Vec<[f64; 4]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Filters a raw annotation manifest (records carry `bbox` and/or `bboxes`).
/// Accepted records go to `output`; rejections with reasons to
/// `<output>.rejects.jsonl`.
pub fn filter_manifest(input: &Path, output: &Path) -> Result<FilterSummary> {
    let raw: Vec<RawRecord> = read_jsonl(input)?;
    let in_dir = parent_dir(input);
    let out_dir = parent_dir(output);
    if !out_dir.as_os_str().is_empty() {
        create_dir(&out_dir)?;
    }
    let in_abs = std::fs::canonicalize(if in_dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        &in_dir
    })
    .map_err(|e| Error::io(&in_dir, e))?;
    let out_abs = std::fs::canonicalize(if out_dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        &out_dir
    })
    .map_err(|e| Error::io(&out_dir, e))?;
    // keep relative paths when the filtered manifest sits next to the images
    let same_dir = in_abs == out_abs;
    let mut accepted = Vec::new();
    let mut summary = FilterSummary::default();
    for r in raw {
        let boxes: Vec<BoundingBox> = r
            .bbox
            .into_iter()
            .chain(r.bboxes.into_iter().flatten())
            .map(|b| BoundingBox::new_unchecked(b[0], b[1], b[2], b[3]))
            .collect();
        let decision = match png_dims(&in_dir.join(&r.path)) {
            Ok(dims) => filter_record(dims, &boxes),
            Err(_) => FilterDecision::Reject(RejectReason::UnreadableImage),
        };
        match decision {
            FilterDecision::Accept => accepted.push(DatasetRecord {
                id: r.id,
                path: if same_dir {
                    r.path
                } else {
                    in_abs.join(&r.path).to_string_lossy().into_owned()
                },
                bbox: boxes[0],
            }),
            FilterDecision::Reject(reason) => summary.rejected.push(Rejection { id: r.id, reason }),
        }
    }
    summary.accepted = accepted.len();
    write_jsonl(output, &accepted)?;
    let mut rej = output.as_os_str().to_owned();
    rej.push(".rejects.jsonl");
    write_jsonl(Path::new(&rej), &summary.rejected)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// split

/// Deterministic split: ids are sorted and deduplicated, then shuffled with a
/// stream derived from `seed`; the first `round(n * train)` go to training.
/// Both returned lists are sorted.
pub fn split_dataset(ids: &[String], seed: u64, fractions: SplitFractions) -> Result<(Vec<String>, Vec<String>)> {
    fractions.validate()?;
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let n_train = (sorted.len() as f64 * fractions.train).round() as usize;
    if n_train == 0 || n_train == sorted.len() {
        return Err(Error::Config(format!(
            "split {}/{} of {} records leaves one side empty",
            fractions.train,
            fractions.val,
            sorted.len()
        )));
    }
    derive_named(seed, "dataset-split").shuffle(&mut sorted);
    let mut val = sorted.split_off(n_train);
    sorted.sort();
    val.sort();
    Ok((sorted, val))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub experiment_seed: u64,
    pub fractions: SplitFractions,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

// ---------------------------------------------------------------------------
// pairs

pub const PAIR_INDEX: &str = "index.jsonl";
pub const SPLIT_FILE: &str = "split.json";

/// One line of a pair directory's `index.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairIndexEntry {
    pub pair_id: String,
    pub source_id: String,
    pub task: TaskKind,
    pub value_a: f64,
    pub value_b: f64,
    pub label: bool,
}

impl PairIndexEntry {
    pub fn image_file(&self, role: Role) -> String {
        format!("{}_{}.png", self.pair_id, role.as_str())
    }
}

pub fn pair_id(task: TaskKind, source_id: &str, k: u32) -> String {
    format!("{task}-{source_id}-{k:03}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOptions {
    pub experiment_seed: u64,
    pub pairs_per_image: u32,
    pub augment: AugmentConfig,
    pub split: SplitFractions,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            experiment_seed: 0,
            pairs_per_image: 1,
            augment: AugmentConfig::default(),
            split: SplitFractions::default(),
        }
    }
}

/// Reads a filtered manifest; relative image paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<(Vec<DatasetRecord>, PathBuf)> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for r in &records {
        check_id(&r.id)?;
        if !seen.insert(r.id.clone()) {
            return Err(Error::InvalidArgument(format!("duplicate record id `{}`", r.id)));
        }
    }
    Ok((records, parent_dir(path)))
}

fn load_source(record: &DatasetRecord, base: &Path) -> Result<SourceImage> {
    let image = load_png(&base.join(&record.path))?;
    match filter_record((image.height(), image.width()), &[record.bbox]) {
        FilterDecision::Accept => Ok(SourceImage {
            id: record.id.clone(),
            image,
            bbox: record.bbox,
        }),
        FilterDecision::Reject(reason) => Err(Error::Source {
            source_id: record.id.clone(),
            inner: Box::new(Error::InvalidArgument(format!(
                "record does not pass the dataset filter ({})",
                reason.code()
            ))),
        }),
    }
}

/// Generates `pairs_per_image` pairs per record for `task` into `out_dir`
/// (`<pair_id>_a.png`, `<pair_id>_b.png`, `index.jsonl`, `split.json`).
pub fn generate_pairs(
    records: &[DatasetRecord],
    base: &Path,
    task: TaskKind,
    opts: &PairOptions,
    out_dir: &Path,
) -> Result<Vec<PairIndexEntry>> {
    opts.augment.validate()?;
    create_dir(out_dir)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let (train_ids, val_ids) = split_dataset(&ids, opts.experiment_seed, opts.split)?;
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    // records are independent; collect in sorted order so the index is stable
    let per_record: Vec<Vec<PairIndexEntry>> = sorted
        .par_iter()
        .map(|record| -> Result<Vec<PairIndexEntry>> {
            check_id(&record.id)?;
            let source = load_source(record, base)?;
            let mut entries = Vec::with_capacity(opts.pairs_per_image as usize);
            for k in 0..opts.pairs_per_image {
                let spec = SeedSpec::new(opts.experiment_seed, record.id.clone(), task, k);
                let pair = make_pair(&source, task, &spec, &opts.augment)?;
                let entry = PairIndexEntry {
                    pair_id: pair_id(task, &record.id, k),
                    source_id: record.id.clone(),
                    task,
                    value_a: pair.params_a.value,
                    value_b: pair.params_b.value,
                    label: pair.label,
                };
                save_png(&pair.image_a, &out_dir.join(entry.image_file(Role::A)))?;
                save_png(&pair.image_b, &out_dir.join(entry.image_file(Role::B)))?;
                entries.push(entry);
            }
            Ok(entries)
        })
        .collect::<Result<_>>()?;
    let index: Vec<PairIndexEntry> = per_record.into_iter().flatten().collect();
    write_jsonl(&out_dir.join(PAIR_INDEX), &index)?;
    write_json(
        &out_dir.join(SPLIT_FILE),
        &SplitFile {
            experiment_seed: opts.experiment_seed,
            fractions: opts.split,
            train: train_ids,
            val: val_ids,
        },
    )?;
    Ok(index)
}

pub fn read_pairs(pairs_dir: &Path) -> Result<(Vec<PairIndexEntry>, SplitFile)> {
    let index = read_jsonl(&pairs_dir.join(PAIR_INDEX))?;
    let split = read_json(&pairs_dir.join(SPLIT_FILE))?;
    Ok((index, split))
}

// ---------------------------------------------------------------------------
// features

const FEATURE_CHUNK: usize = 64;

// features plus the (height, width) they came from
type Computed = (Vec<f32>, (usize, usize));

/// In-repo feature extractors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyticBackbone {
    Passthrough,
    Dct,
}

impl AnalyticBackbone {
    pub fn name(self) -> &'static str {
        match self {
            AnalyticBackbone::Passthrough => "passthrough",
            AnalyticBackbone::Dct => "dct",
        }
    }
}

/// Computes features for every pair image in `pairs_dir` and writes a bundle at `out_base`.
pub fn extract_features(pairs_dir: &Path, backbone: AnalyticBackbone, out_base: &Path) -> Result<ActivationManifest> {
    let index: Vec<PairIndexEntry> = read_jsonl(&pairs_dir.join(PAIR_INDEX))?;
    if let Some(parent) = out_base.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let layer = |h: usize, w: usize| match backbone {
        AnalyticBackbone::Passthrough => passthrough_layer(h, w),
        AnalyticBackbone::Dct => dct_layer(),
    };
    let mut writer: Option<BundleWriter> = None;
    // bounded chunks keep memory flat for large pass-through features
    for chunk in index.chunks(FEATURE_CHUNK) {
        let computed: Vec<[Computed; 2]> = chunk
            .par_iter()
            .map(|entry| -> Result<_> {
                let one = |role| -> Result<Computed> {
                    let image = load_png(&pairs_dir.join(entry.image_file(role)))?;
                    let f = match backbone {
                        AnalyticBackbone::Passthrough => passthrough_features(&image),
                        AnalyticBackbone::Dct => dct_features(&image).pooled,
                    };
                    Ok((f, (image.height(), image.width())))
                };
                Ok([one(Role::A)?, one(Role::B)?])
            })
            .collect::<Result<_>>()?;
        for (entry, features) in chunk.iter().zip(computed) {
            for ((role, value), (f, (h, w))) in [(Role::A, entry.value_a), (Role::B, entry.value_b)]
                .into_iter()
                .zip(features)
            {
                if writer.is_none() {
                    writer = Some(BundleWriter::create(out_base, backbone.name(), vec![layer(h, w)])?);
                }
                writer.as_mut().expect("writer initialized").append(
                    SampleEntry {
                        sample_id: Bundle::sample_id(&entry.pair_id, role),
                        pair_id: entry.pair_id.clone(),
                        role,
                        task: entry.task,
                        value,
                        offsets: Vec::new(),
                    },
                    &[&f],
                )?;
            }
        }
    }
    match writer {
        Some(w) => w.finish(),
        None => Err(Error::InvalidArgument(format!(
            "{}: no pairs to extract",
            pairs_dir.display()
        ))),
    }
}

/// Fails with the list of pairs whose members are missing from `bundle`.
pub fn check_coverage(index: &[PairIndexEntry], bundle: &Bundle) -> Result<()> {
    let missing: Vec<String> = index
        .iter()
        .filter(|e| {
            !bundle.contains(&Bundle::sample_id(&e.pair_id, Role::A))
                || !bundle.contains(&Bundle::sample_id(&e.pair_id, Role::B))
        })
        .map(|e| e.pair_id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingPairs(missing))
    }
}

/// Pools bundle features for the pairs of `pairs_dir`, split by source image.
pub fn load_datasets(pairs_dir: &Path, bundle: &Bundle) -> Result<(PairDataset, PairDataset)> {
    let (index, split) = read_pairs(pairs_dir)?;
    check_coverage(&index, bundle)?;
    let train_ids: HashSet<&str> = split.train.iter().map(String::as_str).collect();
    let val_ids: HashSet<&str> = split.val.iter().map(String::as_str).collect();
    let layers = bundle.layers();
    let dim_map = DimMap::from_layers(layers);
    let (mut train_pairs, mut val_pairs) = (Vec::new(), Vec::new());
    for e in &index {
        let a = pool_activations(layers, &bundle.get(&Bundle::sample_id(&e.pair_id, Role::A))?)?;
        let b = pool_activations(layers, &bundle.get(&Bundle::sample_id(&e.pair_id, Role::B))?)?;
        let pair = LabeledPair {
            pair_id: e.pair_id.clone(),
            source_id: e.source_id.clone(),
            a,
            b,
            label: e.label,
        };
        if train_ids.contains(e.source_id.as_str()) {
            train_pairs.push(pair);
        } else if val_ids.contains(e.source_id.as_str()) {
            val_pairs.push(pair);
        } else {
            return Err(Error::InvalidArgument(format!(
                "pair `{}` comes from `{}`, which is in neither split",
                e.pair_id, e.source_id
            )));
        }
    }
    Ok((
        PairDataset::new(dim_map.clone(), train_pairs)?,
        PairDataset::new(dim_map, val_pairs)?,
    ))
}

// ---------------------------------------------------------------------------
// run

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub task: TaskKind,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub experiment_seed: u64,
    pub backbone: String,
    pub records_accepted: usize,
    pub records_rejected: Vec<Rejection>,
    pub accuracy: Vec<AccuracyRow>,
    pub ablation: BTreeMap<TaskKind, Vec<AblationRow>>,
    pub artifacts: Vec<Artifact>,
}

pub fn accuracy_csv(stamp: &Stamp, backbone: &str, rows: &[AccuracyRow]) -> String {
    let mut out = stamp_line(stamp);
    out.push_str("task,backbone,train_pairs,val_pairs,train_accuracy,val_accuracy,final_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{backbone},{},{},{:.6},{:.6},{:.9}",
            r.task, r.train_pairs, r.val_pairs, r.train_accuracy, r.val_accuracy, r.final_loss
        );
    }
    out
}

/// Renders `importance_<mode>.png` for each mode from importance reports.
pub fn render_importance(reports: &[ImportanceReport], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for mode in Aggregation::BOTH {
        let path = dir.join(format!("importance_{}.png", mode.as_str()));
        render_heatmap(&ShareGrid::from_reports(reports, mode), &path)?;
        out.push(path);
    }
    Ok(out)
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn collect_artifacts(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_artifacts(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != "report.json") {
            let rel = p.strip_prefix(root).unwrap_or(&p);
            out.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: file_sha256(&p)?,
            });
        }
    }
    Ok(())
}

/// Runs every stage and writes the report bundle into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let stamp = cfg.stamp();
    let out = &cfg.output_dir;
    create_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;

    let filtered = out.join("dataset.filtered.jsonl");
    let summary = filter_manifest(&cfg.dataset, &filtered)?;
    let (records, base) = load_manifest(&filtered)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records survive the dataset filter".into()));
    }

    let external = match &cfg.backbone {
        Backbone::Bundle(p) => Some(Bundle::open(p)?.strict(true)),
        _ => None,
    };
    let opts = PairOptions {
        experiment_seed: cfg.experiment_seed,
        pairs_per_image: cfg.pairs_per_image,
        augment: cfg.augment.clone(),
        split: cfg.split,
    };
    for dir in ["pairs", "features", "probes"] {
        create_dir(&out.join(dir))?;
    }

    let mut accuracy = Vec::new();
    let mut reports = Vec::new();
    let mut ablation = BTreeMap::new();
    let mut ablation_text = String::new();
    for &task in &cfg.tasks {
        let pairs_dir = out.join("pairs").join(task.as_str());
        generate_pairs(&records, &base, task, &opts, &pairs_dir)?;
        let local;
        let bundle = match (&cfg.backbone, &external) {
            (_, Some(b)) => b,
            (Backbone::Passthrough | Backbone::Dct, None) => {
                let kind = if cfg.backbone == Backbone::Dct {
                    AnalyticBackbone::Dct
                } else {
                    AnalyticBackbone::Passthrough
                };
                let fbase = out.join("features").join(task.as_str());
                extract_features(&pairs_dir, kind, &fbase)?;
                local = Bundle::open(&fbase)?.strict(true);
                &local
            }
            (Backbone::Bundle(_), None) => unreachable!("bundle opened above"),
        };
        let (train_set, val_set) = load_datasets(&pairs_dir, bundle)?;
        if train_set.is_empty() || val_set.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{task}: empty train or validation split"
            )));
        }
        let (mut probe, log) = train(&train_set, &cfg.train)?;
        probe.stamp = Some(stamp.clone());
        probe.save(&out.join("probes").join(format!("{task}.json")))?;
        accuracy.push(AccuracyRow {
            task,
            train_pairs: train_set.len(),
            val_pairs: val_set.len(),
            train_accuracy: log.train_accuracy,
            val_accuracy: evaluate(&probe, &val_set.pairs)?,
            final_loss: log.final_loss,
        });
        reports.push(probe_importance(task, &probe, &train_set)?);

        let blocks = match &cfg.ablation_blocks {
            Some(b) => b.clone(),
            None => train_set.dim_map.blocks(),
        };
        if cfg.ablation_blocks.is_some() || blocks.len() > 1 {
            let rows = block_ablation(&train_set, &val_set, &blocks, &cfg.train)?;
            let csv = ablation_csv(task, &rows);
            let body = csv.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
            if ablation_text.is_empty() {
                ablation_text = stamp_line(&stamp) + &csv;
            } else {
                ablation_text.push_str(body);
            }
            ablation.insert(task, rows);
        }
    }

    let backbone_name = match &cfg.backbone {
        Backbone::Bundle(_) => external
            .as_ref()
            .map(|b| b.manifest().backbone_name.clone())
            .unwrap_or_default(),
        other => other.to_string(),
    };
    write_text(
        &out.join("accuracy.csv"),
        &accuracy_csv(&stamp, &backbone_name, &accuracy),
    )?;
    write_text(
        &out.join("importance.csv"),
        &(stamp_line(&stamp) + &importance_csv(&reports, &Aggregation::BOTH)),
    )?;
    render_importance(&reports, out)?;
    if !ablation_text.is_empty() {
        write_text(&out.join("ablation.csv"), &ablation_text)?;
    }

    let mut artifacts = Vec::new();
    collect_artifacts(out, out, &mut artifacts)?;
    let report = ExperimentReport {
        config_hash: stamp.config_hash,
        experiment_seed: cfg.experiment_seed,
        backbone: backbone_name,
        records_accepted: summary.accepted,
        records_rejected: summary.rejected,
        accuracy,
        ablation,
        artifacts,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Loads a probe together with the features it was trained on and re-evaluates it.
pub fn reevaluate(probe_path: &Path, pairs_dir: &Path, bundle: &Bundle) -> Result<(f64, f64)> {
    let probe = RankProbe::load(probe_path)?;
    let (train_set, val_set) = load_datasets(pairs_dir, bundle)?;
    Ok((evaluate(&probe, &train_set.pairs)?, evaluate(&probe, &val_set.pairs)?))
}
