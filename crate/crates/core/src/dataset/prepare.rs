//! Turns a directory of videos into full-frame and face-crop image sets with
//! their manifests.
//!
//! Input layout is `<input>/<subject>/<attack_code>/<video>` for ROSE-Youtu
//! (splits come from the subject rule) and
//! `<input>/<train|test>/<subject>/<attack_code>/<video>` for the other
//! datasets. A video is a GIF, a still image or a directory of frames.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::face::{crop_face, BoundingBox, CentralBoxDetector, Detection, FaceDetector, FixedDetector};
use super::frames::extract_frames;
use super::manifest::save_manifest;
use super::split::rose_youtu_split;
use super::synthetic::{image_path, manifest_file_name};
use super::types::{AttackType, DatasetManifest, DatasetName, SampleRecord, Split, Variant};
use crate::error::{PadError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSelection {
    Full,
    Crop,
    #[default]
    Both,
}

impl VariantSelection {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantSelection::Full => vec![Variant::Full],
            VariantSelection::Crop => vec![Variant::Crop],
            VariantSelection::Both => vec![Variant::Full, Variant::Crop],
        }
    }
}

impl std::str::FromStr for VariantSelection {
    type Err = PadError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "crop" => Ok(Self::Crop),
            "both" => Ok(Self::Both),
            other => Err(PadError::Config(format!("unknown variant '{other}', expected full, crop or both"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    pub variant: VariantSelection,
    pub stride: usize,
    pub dataset: DatasetName,
    /// Optional CSV of detections (`video_id,frame_index,x0,y0,x1,y1,confidence`).
    /// Without it the central half of each frame is taken as the face box.
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareSummary {
    pub manifests: Vec<PathBuf>,
    pub videos: usize,
    pub frames: usize,
    pub written: usize,
    pub skipped_no_face: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct BoxRow {
    video_id: String,
    frame_index: u32,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    confidence: f32,
}

fn load_boxes(path: &Path) -> Result<HashMap<(String, u32), Vec<Detection>>> {
    let mut map: HashMap<(String, u32), Vec<Detection>> = HashMap::new();
    let mut reader = csv::Reader::from_path(path).map_err(|e| PadError::Config(format!("{}: {e}", path.display())))?;
    for row in reader.deserialize() {
        let row: BoxRow = row?;
        map.entry((row.video_id, row.frame_index)).or_default().push(Detection {
            bbox: BoundingBox::new(row.x0, row.y0, row.x1, row.y1),
            confidence: row.confidence,
        });
    }
    Ok(map)
}

struct VideoSource {
    path: PathBuf,
    subject_id: u32,
    attack_type: AttackType,
    split: Split,
    video_id: String,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| PadError::Ingestion { path: dir.to_path_buf(), reason: e.to_string() })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .collect();
    entries.sort();
    Ok(entries)
}

fn parse_component<T: std::str::FromStr>(path: &Path, what: &str) -> Result<T> {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| PadError::Config(format!("{}: expected a numeric {what} directory", path.display())))
}

fn discover_subjects(root: &Path, split: Split, out: &mut Vec<VideoSource>) -> Result<()> {
    for subject_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let subject_id: u32 = parse_component(&subject_dir, "subject")?;
        for code_dir in sorted_entries(&subject_dir)?.into_iter().filter(|p| p.is_dir()) {
            let code: u8 = parse_component(&code_dir, "attack code")?;
            let attack_type = AttackType::new(code).map_err(|e| PadError::Config(e.to_string()))?;
            for video in sorted_entries(&code_dir)? {
                let stem = video.file_stem().and_then(|s| s.to_str()).unwrap_or("video").to_string();
                out.push(VideoSource {
                    video_id: format!("{subject_id}_{code}_{stem}"),
                    path: video,
                    subject_id,
                    attack_type,
                    split,
                });
            }
        }
    }
    Ok(())
}

fn discover(options: &PrepareOptions) -> Result<Vec<VideoSource>> {
    if !options.input.is_dir() {
        return Err(PadError::Config(format!("input directory {} not found", options.input.display())));
    }
    let mut videos = Vec::new();
    if options.dataset == DatasetName::RoseYoutu {
        discover_subjects(&options.input, Split::Train, &mut videos)?;
    } else {
        for split in [Split::Train, Split::Test] {
            let dir = options.input.join(split.as_str());
            if dir.is_dir() {
                discover_subjects(&dir, split, &mut videos)?;
            }
        }
    }
    Ok(videos)
}

/// Extracts frames, computes crops and writes PNGs plus manifests. Frames
/// already on disk are not rewritten, so reruns only add what is missing.
pub fn prepare_dataset(options: &PrepareOptions) -> Result<PrepareSummary> {
    if options.stride == 0 {
        return Err(PadError::Config("stride must be at least 1".into()));
    }
    let videos = discover(options)?;
    let boxes = options.boxes.as_deref().map(load_boxes).transpose()?;
    let variants = options.variant.variants();
    let wants_crop = variants.contains(&Variant::Crop);
    let central = CentralBoxDetector::default();
    let mut records: HashMap<Variant, Vec<SampleRecord>> = HashMap::new();
    let mut summary = PrepareSummary { videos: videos.len(), ..Default::default() };

    for video in &videos {
        for (frame_index, image) in extract_frames(&video.path, options.stride)? {
            summary.frames += 1;
            let crop = if wants_crop {
                let fixed;
                let detector: &dyn FaceDetector = match &boxes {
                    Some(map) => {
                        let detections = map.get(&(video.video_id.clone(), frame_index)).cloned().unwrap_or_default();
                        fixed = FixedDetector { detections };
                        &fixed
                    }
                    None => &central,
                };
                match crop_face(&image, detector) {
                    Ok(c) => Some(c),
                    Err(PadError::NoFace) => {
                        ::log::warn!("no face in {} frame {frame_index}; skipping", video.video_id);
                        summary.skipped_no_face += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            for &variant in &variants {
                let rel = image_path(variant, video.subject_id, &video.video_id, frame_index);
                let path = options.output.join(&rel);
                if !path.is_file() {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    match variant {
                        Variant::Full => image.save(&path)?,
                        Variant::Crop => crop.as_ref().expect("crop computed").save(&path)?,
                    }
                    summary.written += 1;
                }
                records.entry(variant).or_default().push(SampleRecord {
                    path: rel,
                    subject_id: video.subject_id,
                    video_id: video.video_id.clone(),
                    frame_index,
                    label: video.attack_type.label(),
                    attack_type: video.attack_type,
                    variant,
                    split: video.split,
                });
            }
        }
    }

    for variant in variants {
        let mut manifest = DatasetManifest::new(options.dataset, records.remove(&variant).unwrap_or_default());
        if options.dataset == DatasetName::RoseYoutu {
            manifest = rose_youtu_split(manifest)?;
        }
        manifest.validate()?;
        let path = options.output.join(manifest_file_name(variant));
        save_manifest(&path, &manifest)?;
        summary.manifests.push(path);
    }
    Ok(summary)
}
