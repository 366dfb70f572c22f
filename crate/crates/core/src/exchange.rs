//! Activation bundles: a JSON manifest plus a little-endian `f32` blob.
//!
//! `<name>.apx` starts with the 8-byte header `b"APX1"`, a version byte and
//! three zero bytes. Each (sample, layer) tensor is stored contiguously,
//! row-major, at the absolute byte offset recorded in `<name>.manifest.json`.
//! The byte-level layout is documented in `docs/format.md`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_layers, LayerMeta, TaskKind};

pub const MAGIC: &[u8; 4] = b"APX1";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::A => "a",
            Role::B => "b",
        }
    }
}

/// Index entry for one stored sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub pair_id: String,
    pub role: Role,
    pub task: TaskKind,
    pub value: f64,
    /// Absolute byte offset of each layer tensor in the blob, in layer order.
    #[serde(default)]
    pub offsets: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationManifest {
    pub format_version: u8,
    pub backbone_name: String,
    /// File name of the blob, relative to the manifest.
    pub blob: String,
    pub blob_bytes: u64,
    /// Free-form preprocessing record written by exporters (input normalization etc).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<serde_json::Value>,
    pub layers: Vec<LayerMeta>,
    pub samples: Vec<SampleEntry>,
}

impl ActivationManifest {
    /// Checks structural invariants against a blob of `blob_len` bytes.
    pub fn validate(&self, blob_len: u64) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        validate_layers(&self.layers)?;
        if blob_len != self.blob_bytes {
            return Err(Error::Truncated {
                expected: self.blob_bytes,
                actual: blob_len,
            });
        }
        let mut ids = std::collections::HashSet::new();
        let mut spans = Vec::with_capacity(self.samples.len() * self.layers.len());
        for s in &self.samples {
            if !ids.insert(s.sample_id.as_str()) {
                return Err(Error::Bundle(format!("duplicate sample id `{}`", s.sample_id)));
            }
            if s.offsets.len() != self.layers.len() {
                return Err(Error::Bundle(format!(
                    "sample `{}` has {} layer offsets, expected {}",
                    s.sample_id,
                    s.offsets.len(),
                    self.layers.len()
                )));
            }
            for (layer, &off) in self.layers.iter().zip(&s.offsets) {
                let end = off + 4 * layer.stored_len() as u64;
                if off < HEADER_LEN || end > blob_len {
                    return Err(Error::Bundle(format!(
                        "sample `{}` layer `{}` spans bytes {off}..{end} outside the {blob_len}-byte blob",
                        s.sample_id, layer.name
                    )));
                }
                spans.push((off, end));
            }
        }
        spans.sort_unstable();
        if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(Error::Bundle(format!(
                "overlapping tensors at bytes {}..{} and {}..{}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(())
    }
}

/// Per-layer tensors for one sample, in manifest layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    pub sample_id: String,
    pub layers: Vec<Vec<f32>>,
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_suffix(base, ".manifest.json")
}

pub fn blob_path(base: &Path) -> PathBuf {
    with_suffix(base, ".apx")
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Accepts either the bundle base path or the manifest path itself.
pub fn bundle_base(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if let Some(stripped) = s.strip_suffix(".manifest.json") {
        PathBuf::from(stripped)
    } else if let Some(stripped) = s.strip_suffix(".apx") {
        PathBuf::from(stripped)
    } else {
        path.to_path_buf()
    }
}

/// Streaming single-writer for a bundle.
pub struct BundleWriter {
    base: PathBuf,
    blob: BufWriter<File>,
    pos: u64,
    manifest: ActivationManifest,
    ids: std::collections::HashSet<String>,
}

impl BundleWriter {
    pub fn create(base: impl AsRef<Path>, backbone_name: &str, layers: Vec<LayerMeta>) -> Result<Self> {
        validate_layers(&layers)?;
        let base = base.as_ref().to_path_buf();
        let path = blob_path(&base);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut blob = BufWriter::new(file);
        let mut header = [0u8; HEADER_LEN as usize];
        header[..4].copy_from_slice(MAGIC);
        header[4] = FORMAT_VERSION;
        blob.write_all(&header).map_err(|e| Error::io(&path, e))?;
        let blob_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            base,
            blob,
            pos: HEADER_LEN,
            manifest: ActivationManifest {
                format_version: FORMAT_VERSION,
                backbone_name: backbone_name.to_string(),
                blob: blob_name,
                blob_bytes: 0,
                preprocessing: None,
                layers,
                samples: Vec::new(),
            },
            ids: Default::default(),
        })
    }

    pub fn set_preprocessing(&mut self, value: serde_json::Value) {
        self.manifest.preprocessing = Some(value);
    }

    /// Appends one sample; `entry.offsets` is filled in by the writer.
    pub fn append(&mut self, mut entry: SampleEntry, layers: &[&[f32]]) -> Result<()> {
        if layers.len() != self.manifest.layers.len() {
            return Err(Error::Bundle(format!(
                "sample `{}` provides {} layers, manifest declares {}",
                entry.sample_id,
                layers.len(),
                self.manifest.layers.len()
            )));
        }
        for (meta, data) in self.manifest.layers.iter().zip(layers) {
            if data.len() != meta.stored_len() {
                return Err(Error::ShapeMismatch {
                    sample: entry.sample_id.clone(),
                    layer: meta.name.clone(),
                    expected: meta.stored_len(),
                    actual: data.len(),
                });
            }
        }
        if !self.ids.insert(entry.sample_id.clone()) {
            return Err(Error::Bundle(format!("duplicate sample id `{}`", entry.sample_id)));
        }
        let path = blob_path(&self.base);
        entry.offsets.clear();
        let mut buf = Vec::new();
        for data in layers {
            entry.offsets.push(self.pos);
            buf.clear();
            buf.reserve(data.len() * 4);
            for v in data.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.blob.write_all(&buf).map_err(|e| Error::io(&path, e))?;
            self.pos += buf.len() as u64;
        }
        self.manifest.samples.push(entry);
        Ok(())
    }

    /// Flushes the blob and writes the manifest.
    pub fn finish(mut self) -> Result<ActivationManifest> {
        let path = blob_path(&self.base);
        self.blob.flush().map_err(|e| Error::io(&path, e))?;
        self.manifest.blob_bytes = self.pos;
        let mpath = manifest_path(&self.base);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::json(&mpath, e))?;
        std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
        Ok(self.manifest)
    }
}

/// Writes a complete bundle in one call.
pub fn write_bundle(
    base: impl AsRef<Path>,
    backbone_name: &str,
    layers: Vec<LayerMeta>,
    samples: impl IntoIterator<Item = (SampleEntry, Vec<Vec<f32>>)>,
) -> Result<ActivationManifest> {
    let mut w = BundleWriter::create(base, backbone_name, layers)?;
    for (entry, tensors) in samples {
        let refs: Vec<&[f32]> = tensors.iter().map(Vec::as_slice).collect();
        w.append(entry, &refs)?;
    }
    w.finish()
}

/// Random-access reader. Sample reads go through positioned I/O on a shared
/// handle, so the reader can be used from several threads.
pub struct Bundle {
    manifest: ActivationManifest,
    path: PathBuf,
    file: Mutex<File>,
    index: HashMap<String, usize>,
    strict: bool,
}

impl std::fmt::Debug for Bundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bundle")
            .field("path", &self.path)
            .field("samples", &self.manifest.samples.len())
            .field("strict", &self.strict)
            .finish()
    }
}

impl Bundle {
    /// Opens `<base>.manifest.json` and `<base>.apx`, validating header and offsets.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let base = bundle_base(path.as_ref());
        let mpath = manifest_path(&base);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: ActivationManifest = serde_json::from_str(&text).map_err(|e| Error::json(&mpath, e))?;
        let bpath = mpath
            .parent()
            .map(|p| p.join(&manifest.blob))
            .unwrap_or_else(|| PathBuf::from(&manifest.blob));
        let mut file = File::open(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let len = file.metadata().map_err(|e| Error::io(&bpath, e))?.len();
        let mut header = [0u8; HEADER_LEN as usize];
        if len < HEADER_LEN {
            return Err(Error::Truncated {
                expected: manifest.blob_bytes.max(HEADER_LEN),
                actual: len,
            });
        }
        file.read_exact(&mut header).map_err(|e| Error::io(&bpath, e))?;
        if &header[..4] != MAGIC {
            return Err(Error::Bundle(format!(
                "{}: bad magic {:?}",
                bpath.display(),
                &header[..4]
            )));
        }
        if header[4] != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header[4]));
        }
        manifest.validate(len)?;
        let index = manifest
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.sample_id.clone(), i))
            .collect();
        Ok(Self {
            manifest,
            path: bpath,
            file: Mutex::new(file),
            index,
            strict: false,
        })
    }

    /// In strict mode, reads fail on non-finite values.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn manifest(&self) -> &ActivationManifest {
        &self.manifest
    }

    pub fn layers(&self) -> &[LayerMeta] {
        &self.manifest.layers
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.index.contains_key(sample_id)
    }

    pub fn entry(&self, sample_id: &str) -> Option<&SampleEntry> {
        self.index.get(sample_id).map(|&i| &self.manifest.samples[i])
    }

    pub fn get(&self, sample_id: &str) -> Result<ActivationSet> {
        let i = *self
            .index
            .get(sample_id)
            .ok_or_else(|| Error::Bundle(format!("no sample `{sample_id}` in bundle")))?;
        self.get_index(i)
    }

    pub fn get_index(&self, i: usize) -> Result<ActivationSet> {
        let entry = &self.manifest.samples[i];
        let mut layers = Vec::with_capacity(self.manifest.layers.len());
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        for (meta, &off) in self.manifest.layers.iter().zip(&entry.offsets) {
            let mut bytes = vec![0u8; meta.stored_len() * 4];
            file.seek(SeekFrom::Start(off)).map_err(|e| Error::io(&self.path, e))?;
            file.read_exact(&mut bytes).map_err(|e| Error::io(&self.path, e))?;
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if self.strict && values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    sample: entry.sample_id.clone(),
                    layer: meta.name.clone(),
                });
            }
            layers.push(values);
        }
        Ok(ActivationSet {
            sample_id: entry.sample_id.clone(),
            layers,
        })
    }

    /// Reads every sample in manifest order.
    pub fn read_all(&self) -> Result<Vec<ActivationSet>> {
        (0..self.len()).map(|i| self.get_index(i)).collect()
    }

    /// Sample id under which a pair member is stored.
    pub fn sample_id(pair_id: &str, role: Role) -> String {
        format!("{pair_id}/{}", role.as_str())
    }
}
