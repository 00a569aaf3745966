use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::synth::ForgeryKind;

const SPLIT_TAG: u64 = 0x0053_504c_4954;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}, expected train or val"))),
        }
    }
}

/// One manifest line. Field order here is the on-disk order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    /// 0 = authentic, 1 = forged.
    pub label: u8,
    pub forgery_kind: ForgeryKind,
    pub mask_path: Option<String>,
    pub split: Split,
}

impl ManifestRecord {
    fn check(&self) -> Result<()> {
        let forged = self.forgery_kind != ForgeryKind::None;
        if self.label > 1 || (self.label == 1) != forged || self.mask_path.is_some() != forged {
            return Err(Error::Manifest(format!(
                "{}: label {}, kind {}, mask {:?} are inconsistent (forged ⇔ kind ≠ none ⇔ mask present)",
                self.image_path, self.label, self.forgery_kind, self.mask_path
            )));
        }
        Ok(())
    }
}

/// An image to be listed: authentic when `forgery_kind` is `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub image_path: String,
    pub forgery_kind: ForgeryKind,
    pub mask_path: Option<String>,
}

impl Entry {
    pub fn authentic(image_path: impl Into<String>) -> Self {
        Self {
            image_path: image_path.into(),
            forgery_kind: ForgeryKind::None,
            mask_path: None,
        }
    }

    pub fn forged(image_path: impl Into<String>, kind: ForgeryKind, mask_path: impl Into<String>) -> Self {
        Self {
            image_path: image_path.into(),
            forgery_kind: kind,
            mask_path: Some(mask_path.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestMeta {
    split_seed: u64,
}

/// Labelled image list with a train/val assignment. Relative paths resolve
/// against `root`, the directory the manifest was loaded from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub split_seed: u64,
    pub root: PathBuf,
}

/// Records per label that go to the training split.
pub fn train_count(n: usize) -> usize {
    (3 * n + 2) / 4
}

/// Lists the PNG files of a directory in lexicographic order.
pub fn scan_png_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Assigns a stratified 75/25 train/val split: within each label the
/// records are shuffled by a seed derived from (`split_seed`, label) and the
/// first ⌈¾n − ½⌉ go to training. A pure function of record order and seed.
pub fn build_manifest(entries: Vec<Entry>, split_seed: u64) -> Result<DatasetManifest> {
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.image_path.clone()) {
            return Err(Error::Manifest(format!("duplicate image path {}", e.image_path)));
        }
        if e.forgery_kind != ForgeryKind::None && e.mask_path.is_none() {
            return Err(Error::Manifest(format!("forged image {} has no mask", e.image_path)));
        }
        let rec = ManifestRecord {
            label: (e.forgery_kind != ForgeryKind::None) as u8,
            image_path: e.image_path,
            forgery_kind: e.forgery_kind,
            mask_path: e.mask_path,
            split: Split::Val,
        };
        rec.check()?;
        records.push(rec);
    }
    for label in 0..=1u8 {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == label).collect();
        idx.shuffle(&mut seeded(derive_seed(split_seed, label as u64, SPLIT_TAG)));
        for &i in &idx[..train_count(idx.len())] {
            records[i].split = Split::Train;
        }
    }
    Ok(DatasetManifest {
        records,
        split_seed,
        root: PathBuf::new(),
    })
}

/// Builds a manifest from a directory of authentic PNGs plus already
/// synthesized forged entries. Paths are stored as given.
pub fn build_manifest_from_dir(authentic_dir: &Path, forged: Vec<Entry>, split_seed: u64) -> Result<DatasetManifest> {
    let authentic = scan_png_dir(authentic_dir)?;
    if authentic.is_empty() || forged.is_empty() {
        return Err(Error::Manifest(format!(
            "need both authentic and forged images; found {} in {} and {} forged",
            authentic.len(),
            authentic_dir.display(),
            forged.len()
        )));
    }
    let mut entries: Vec<Entry> = authentic.iter().map(|p| Entry::authentic(p.to_string_lossy())).collect();
    entries.extend(forged);
    build_manifest(entries, split_seed)
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

impl DatasetManifest {
    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn image_path(&self, id: usize) -> PathBuf {
        self.resolve(&self.records[id].image_path)
    }

    pub fn mask_path(&self, id: usize) -> Option<PathBuf> {
        self.records[id].mask_path.as_deref().map(|m| self.resolve(m))
    }

    /// Record ids of a split, in record order.
    pub fn ids(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split == split).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Writes the records as JSON lines and the split seed to a
    /// `<name>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut f = std::fs::File::create(path).map_err(io_err(path))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(io_err(path))?;
        let meta = meta_path(path);
        let json = serde_json::to_string_pretty(&ManifestMeta { split_seed: self.split_seed })?;
        std::fs::write(&meta, json + "\n").map_err(io_err(&meta))
    }

    /// Reads a manifest; relative paths will resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
            rec.check()?;
            if !seen.insert(rec.image_path.clone()) {
                return Err(Error::Manifest(format!("duplicate image path {}", rec.image_path)));
            }
            records.push(rec);
        }
        let meta = meta_path(path);
        let split_seed = match std::fs::read_to_string(&meta) {
            Ok(s) => serde_json::from_str::<ManifestMeta>(&s)?.split_seed,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io_err(&meta)(e)),
        };
        Ok(Self {
            records,
            split_seed,
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Joins several manifests and draws a fresh stratified split over the
    /// union. Paths are rebased so the result is independent of the inputs'
    /// directories.
    pub fn combine(parts: &[DatasetManifest], split_seed: u64) -> Result<Self> {
        let entries = parts
            .iter()
            .flat_map(|m| {
                m.records.iter().map(|r| Entry {
                    image_path: m.resolve(&r.image_path).to_string_lossy().into_owned(),
                    forgery_kind: r.forgery_kind,
                    mask_path: r.mask_path.as_deref().map(|p| m.resolve(p).to_string_lossy().into_owned()),
                })
            })
            .collect();
        build_manifest(entries, split_seed)
    }

    /// Rewrites paths relative to `dir` where possible, e.g. before saving
    /// a combined manifest next to its data.
    pub fn relative_to(mut self, dir: &Path) -> Self {
        let rebase = |p: &str| -> String {
            let full = self.root.join(p);
            full.strip_prefix(dir).map(|r| r.to_string_lossy().into_owned()).unwrap_or_else(|_| full.to_string_lossy().into_owned())
        };
        let records = self
            .records
            .iter()
            .map(|r| ManifestRecord {
                image_path: rebase(&r.image_path),
                mask_path: r.mask_path.as_deref().map(rebase),
                ..r.clone()
            })
            .collect();
        self.records = records;
        self.root = dir.to_path_buf();
        self
    }
}
