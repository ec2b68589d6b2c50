use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::types::{DatasetManifest, DatasetName, SampleRecord};
use crate::error::{PadError, Result};

pub const MANIFEST_HEADER: &str = "path,subject_id,video_id,frame_index,label,attack_type,variant,split";

pub fn write_manifest_csv<W: Write>(writer: W, manifest: &DatasetManifest) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    if manifest.records.is_empty() {
        w.write_record(MANIFEST_HEADER.split(','))?;
    }
    for r in &manifest.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest_csv<R: Read>(reader: R, name: DatasetName) -> Result<DatasetManifest> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != MANIFEST_HEADER {
        return Err(PadError::Manifest(format!("unexpected manifest header '{}'", header.join(","))));
    }
    let records = r.deserialize().collect::<std::result::Result<Vec<SampleRecord>, _>>()?;
    let manifest = DatasetManifest::new(name, records);
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_manifest_csv(std::io::BufWriter::new(std::fs::File::create(path)?), manifest)
}

pub fn load_manifest(path: &Path, name: DatasetName) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| PadError::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_manifest_csv(std::io::BufReader::new(file), name)
}

/// Source of decoded RGB images addressed by manifest paths.
pub trait ImageStore: Sync {
    fn load(&self, path: &str) -> Result<RgbImage>;
}

/// Images kept in memory, keyed by manifest path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    images: HashMap<String, RgbImage>,
}

impl MemoryStore {
    pub fn insert(&mut self, path: impl Into<String>, image: RgbImage) {
        self.images.insert(path.into(), image);
    }

    pub fn get(&self, path: &str) -> Option<&RgbImage> {
        self.images.get(path)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageStore for MemoryStore {
    fn load(&self, path: &str) -> Result<RgbImage> {
        self.images
            .get(path)
            .cloned()
            .ok_or_else(|| PadError::Ingestion { path: PathBuf::from(path), reason: "not in store".into() })
    }
}

/// PNG/JPEG files resolved relative to a dataset root.
#[derive(Debug, Clone)]
pub struct DiskStore {
    pub root: PathBuf,
}

impl DiskStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ImageStore for DiskStore {
    fn load(&self, path: &str) -> Result<RgbImage> {
        let full = self.root.join(path);
        image::open(&full)
            .map(|img| img.to_rgb8())
            .map_err(|e| PadError::Ingestion { path: full, reason: e.to_string() })
    }
}
