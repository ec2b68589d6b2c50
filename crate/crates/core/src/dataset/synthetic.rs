//! Synthetic face videos with controllable presentation-attack cues.
//!
//! Every frame is a square image with a procedurally drawn face inside the
//! central box and a cluttered background around it. Attack videos carry one
//! artifact: either a compact background object (screen bezel corner, glare,
//! pin) placed entirely outside the face box, or a texture printed over the
//! face. Genuine videos carry neither.

use std::collections::BTreeSet;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::face::{central_box, BoundingBox};
use super::manifest::{save_manifest, MemoryStore};
use super::types::{AttackType, DatasetManifest, DatasetName, SampleRecord, Split, Variant};
use crate::error::{PadError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_subjects: u32,
    pub videos_per_subject: u32,
    pub frames_per_video: u32,
    pub image_size: u32,
    pub cue_strength: f32,
    /// Attack codes whose artifact is drawn only in the background.
    pub background_cue_classes: BTreeSet<u8>,
    /// Attack codes assigned to attack videos, cycled in order.
    pub attack_codes: BTreeSet<u8>,
    /// Inclusive frame range carrying the attack cue; `None` means every frame.
    pub cue_frames: Option<(u32, u32)>,
    /// The first `train_subjects` subjects form the training split.
    pub train_subjects: u32,
    /// Side of the central face box as a fraction of the image side.
    pub face_fraction: f32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_subjects: 30,
            videos_per_subject: 10,
            frames_per_video: 10,
            image_size: 64,
            cue_strength: 1.0,
            background_cue_classes: [3, 4].into(),
            attack_codes: (1..=7).collect(),
            cue_frames: None,
            train_subjects: 20,
            face_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PadError::Config(m));
        if self.frames_per_video < 3 {
            return err(format!("frames_per_video must be at least 3, got {}", self.frames_per_video));
        }
        if self.n_subjects == 0 || self.videos_per_subject == 0 {
            return err("n_subjects and videos_per_subject must be positive".into());
        }
        if self.train_subjects > self.n_subjects {
            return err(format!("train_subjects {} exceeds n_subjects {}", self.train_subjects, self.n_subjects));
        }
        if self.image_size < 16 {
            return err(format!("image_size must be at least 16, got {}", self.image_size));
        }
        if !(0.0..=1.0).contains(&self.cue_strength) {
            return err(format!("cue_strength must lie in [0, 1], got {}", self.cue_strength));
        }
        if !(0.2..=0.8).contains(&self.face_fraction) {
            return err(format!("face_fraction must lie in [0.2, 0.8], got {}", self.face_fraction));
        }
        if self.attack_codes.is_empty() {
            return err("attack_codes must not be empty".into());
        }
        for &c in self.attack_codes.iter().chain(&self.background_cue_classes) {
            if !(1..=7).contains(&c) {
                return err(format!("attack code {c} outside 1..=7"));
            }
        }
        if let Some((a, b)) = self.cue_frames {
            if a > b || b >= self.frames_per_video {
                return err(format!("cue_frames ({a}, {b}) outside 0..{}", self.frames_per_video));
            }
        }
        Ok(())
    }

    /// The face box used for cropping.
    pub fn face_box(&self) -> BoundingBox {
        central_box(self.image_size, self.image_size, self.face_fraction)
    }

    pub fn cue_active(&self, frame: u32) -> bool {
        self.cue_frames.is_none_or(|(a, b)| (a..=b).contains(&frame))
    }
}

/// Where an attack artifact was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueInfo {
    pub attack_type: AttackType,
    pub bbox: BoundingBox,
    pub in_background: bool,
}

/// Per-video rendering parameters, fixed for all frames of the video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPlan {
    pub subject_id: u32,
    pub video_id: String,
    pub attack_type: AttackType,
    pub split: Split,
    pub cue: Option<CueInfo>,
    seed: u64,
    skin: [f32; 3],
    bg_a: [f32; 3],
    bg_b: [f32; 3],
    horizontal: bool,
    clutter: Vec<(BoundingBox, f32)>,
}

fn video_seed(seed: u64, subject: u32, video: u32) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [subject as u64, video as u64] {
        h = (h ^ v).wrapping_mul(0x0100_0000_01b3).rotate_left(17);
    }
    h
}

fn random_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

fn plan_cue(config: &SyntheticConfig, attack_type: AttackType, rng: &mut ChaCha8Rng) -> CueInfo {
    let size = config.image_size;
    let face = config.face_box();
    let in_background = config.background_cue_classes.contains(&attack_type.code());
    if !in_background {
        return CueInfo { attack_type, bbox: face, in_background };
    }
    let band = face.x0.min(face.y0).min(size - face.x1).min(size - face.y1);
    let side = (band * 3 / 4).max(3);
    // The box must stay inside the band on one side of the face box, one
    // pixel away from the image border.
    let slack = band.saturating_sub(side + 1).max(1);
    let along = rng.random_range(1..size - side);
    let across = rng.random_range(1..=slack);
    let (x0, y0) = match rng.random_range(0..4u8) {
        0 => (along, across),
        1 => (along, size - side - across),
        2 => (across, along),
        _ => (size - side - across, along),
    };
    CueInfo { attack_type, bbox: BoundingBox::new(x0, y0, x0 + side, y0 + side), in_background }
}

impl VideoPlan {
    fn new(config: &SyntheticConfig, subject_id: u32, video: u32, attack_type: AttackType) -> Self {
        let seed = video_seed(config.seed, subject_id, video);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = config.image_size;
        let skin_base = [0.85f32, 0.65, 0.52];
        let tone = rng.random_range(0.55f32..1.05);
        let skin = skin_base.map(|c| (c * tone).min(1.0));
        let bg_a = random_color(&mut rng, 0.15, 0.75);
        let bg_b = random_color(&mut rng, 0.15, 0.75);
        let horizontal = rng.random_bool(0.5);
        let clutter = (0..3)
            .map(|_| {
                let w = rng.random_range(4..size / 3);
                let h = rng.random_range(4..size / 3);
                let x0 = rng.random_range(0..size - w);
                let y0 = rng.random_range(0..size - h);
                (BoundingBox::new(x0, y0, x0 + w, y0 + h), rng.random_range(-0.08f32..0.08))
            })
            .collect();
        let cue = (!attack_type.is_genuine()).then(|| plan_cue(config, attack_type, &mut rng));
        let split = if subject_id <= config.train_subjects { Split::Train } else { Split::Test };
        Self {
            subject_id,
            video_id: format!("s{subject_id:03}_v{video:02}"),
            attack_type,
            split,
            cue,
            seed,
            skin,
            bg_a,
            bg_b,
            horizontal,
            clutter,
        }
    }
}

/// All video plans of a configuration, in manifest order.
pub fn plan_videos(config: &SyntheticConfig) -> Result<Vec<VideoPlan>> {
    config.validate()?;
    let codes: Vec<u8> = config.attack_codes.iter().copied().collect();
    let genuine_per_subject = config.videos_per_subject.div_ceil(2);
    let mut plans = Vec::new();
    let mut attack_counter = 0usize;
    for subject in 1..=config.n_subjects {
        for video in 0..config.videos_per_subject {
            let attack_type = if video < genuine_per_subject {
                AttackType::GENUINE
            } else {
                let code = codes[attack_counter % codes.len()];
                attack_counter += 1;
                AttackType::new(code)?
            };
            plans.push(VideoPlan::new(config, subject, video, attack_type));
        }
    }
    Ok(plans)
}

struct Canvas {
    size: u32,
    px: Vec<[f32; 3]>,
}

impl Canvas {
    fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.px[(y * self.size + x) as usize]
    }

    fn set(&mut self, x: u32, y: u32, c: [f32; 3]) {
        self.px[(y * self.size + x) as usize] = c;
    }

    fn blend(&mut self, x: u32, y: u32, c: [f32; 3], amount: f32) {
        let old = self.get(x, y);
        self.set(x, y, std::array::from_fn(|i| old[i] + (c[i] - old[i]) * amount));
    }

    fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.size, self.size, |x, y| {
            Rgb(self.get(x, y).map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }
}

fn in_ellipse(x: f32, y: f32, cx: f32, cy: f32, rx: f32, ry: f32) -> bool {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    dx * dx + dy * dy <= 1.0
}

fn draw_background(canvas: &mut Canvas, plan: &VideoPlan, rng: &mut ChaCha8Rng, brightness: f32) {
    let size = canvas.size;
    let noise = Normal::new(0.0f32, 0.025).expect("valid sigma");
    for y in 0..size {
        for x in 0..size {
            let t = if plan.horizontal { x } else { y } as f32 / (size - 1) as f32;
            let mut c: [f32; 3] = std::array::from_fn(|i| plan.bg_a[i] * (1.0 - t) + plan.bg_b[i] * t);
            for (bbox, shift) in &plan.clutter {
                if bbox.contains(x, y) {
                    c = c.map(|v| v + shift);
                }
            }
            let n = noise.sample(rng);
            canvas.set(x, y, c.map(|v| v * brightness + n));
        }
    }
}

struct FaceGeometry {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
}

fn draw_face(canvas: &mut Canvas, config: &SyntheticConfig, plan: &VideoPlan, rng: &mut ChaCha8Rng, brightness: f32) -> FaceGeometry {
    let face = config.face_box();
    let side = face.width() as f32;
    let cx = face.x0 as f32 + side / 2.0 + rng.random_range(-1.0f32..1.0);
    let cy = face.y0 as f32 + side / 2.0 + rng.random_range(-1.0f32..1.0);
    let geom = FaceGeometry { cx, cy, rx: side * 0.36, ry: side * 0.45 };
    let eye_dx = geom.rx * 0.42;
    let eye_y = cy - geom.ry * 0.2;
    let eye_r = (side * 0.06).max(1.0);
    let mouth_y = cy + geom.ry * 0.45;
    for y in face.y0..face.y1 {
        for x in face.x0..face.x1 {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            if !in_ellipse(fx, fy, cx, cy, geom.rx, geom.ry) {
                continue;
            }
            let shade = 1.0 - 0.25 * ((fx - cx) / geom.rx).powi(2);
            let mut c = plan.skin.map(|v| v * shade * brightness);
            let is_eye = in_ellipse(fx, fy, cx - eye_dx, eye_y, eye_r * 1.4, eye_r)
                || in_ellipse(fx, fy, cx + eye_dx, eye_y, eye_r * 1.4, eye_r);
            let is_mouth = in_ellipse(fx, fy, cx, mouth_y, geom.rx * 0.4, eye_r * 0.7);
            if is_eye {
                c = [0.1, 0.08, 0.07];
            } else if is_mouth {
                c = [0.55, 0.2, 0.2];
            }
            canvas.set(x, y, c);
        }
    }
    geom
}

fn draw_background_cue(canvas: &mut Canvas, cue: &CueInfo, s: f32) {
    let b = cue.bbox;
    let (w, h) = (b.width() as f32, b.height() as f32);
    let (cx, cy) = (b.x0 as f32 + w / 2.0, b.y0 as f32 + h / 2.0);
    let t = (w / 5.0).max(1.0);
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            let (fx, fy) = (x as f32 + 0.5 - b.x0 as f32, y as f32 + 0.5 - b.y0 as f32);
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let color = match cue.attack_type.code() {
                // Pin: dark red disc with a white highlight.
                1 | 2 => {
                    if in_ellipse(px, py, cx - w * 0.12, cy - h * 0.12, w * 0.12, h * 0.12) {
                        Some([1.0, 1.0, 1.0])
                    } else if in_ellipse(px, py, cx, cy, w * 0.4, h * 0.4) {
                        Some([0.6, 0.02, 0.05])
                    } else {
                        None
                    }
                }
                // Screen bezel corner: black L with a glare patch inside.
                3 => {
                    if fx < t || fy < t {
                        Some([0.02, 0.02, 0.03])
                    } else if fx > w * 0.4 && fy > h * 0.4 && fx < w * 0.85 && fy < h * 0.85 {
                        Some([0.97, 0.98, 1.0])
                    } else {
                        None
                    }
                }
                // Display reflection: bright blob ringed by a dark edge.
                4 => {
                    if in_ellipse(px, py, cx, cy, w * 0.3, h * 0.3) {
                        Some([1.0, 1.0, 0.95])
                    } else if in_ellipse(px, py, cx, cy, w * 0.5, h * 0.5) {
                        Some([0.05, 0.05, 0.08])
                    } else {
                        None
                    }
                }
                // Paper mask edge: white sheet with a shadow stripe.
                _ => {
                    if fy > h * 0.35 && fy < h * 0.55 {
                        Some([0.05, 0.05, 0.05])
                    } else if fy >= h * 0.55 {
                        Some([0.96, 0.96, 0.92])
                    } else {
                        None
                    }
                }
            };
            if let Some(c) = color {
                canvas.blend(x, y, c, s);
            }
        }
    }
}

fn draw_face_cue(canvas: &mut Canvas, code: u8, geom: &FaceGeometry, s: f32) {
    let size = canvas.size;
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            if !in_ellipse(fx, fy, geom.cx, geom.cy, geom.rx, geom.ry) {
                continue;
            }
            let old = canvas.get(x, y);
            let new = match code {
                // Halftone print dots.
                1 | 2 => {
                    let period = if code == 1 { 3 } else { 2 };
                    if x % period == 0 && y % period == 0 {
                        old.map(|v| v - 0.35 * s)
                    } else {
                        old
                    }
                }
                // Screen moire stripes.
                3 | 4 => {
                    let k = if code == 3 { 1.3 } else { 0.9 };
                    let m = 0.18 * s * ((fx + fy) * k).sin();
                    old.map(|v| v + m)
                }
                // Mask with eye and mouth holes: washed-out flat paper tone.
                5 | 6 => {
                    let flat = [0.9, 0.88, 0.82];
                    std::array::from_fn(|i| old[i] + (flat[i] - old[i]) * 0.5 * s)
                }
                // Mask cut across the upper face.
                _ => {
                    if (fy - (geom.cy - geom.ry * 0.35)).abs() < 1.0 {
                        old.map(|v| v - 0.6 * s)
                    } else {
                        old
                    }
                }
            };
            canvas.set(x, y, new);
        }
    }
}

/// Renders one frame of a video. With `include_cue == false` the frame is
/// exactly what the video would look like without its attack artifact.
pub fn render_frame(config: &SyntheticConfig, plan: &VideoPlan, frame: u32, include_cue: bool) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ (frame as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    let mut canvas = Canvas { size: config.image_size, px: vec![[0.0; 3]; (config.image_size * config.image_size) as usize] };
    let brightness = rng.random_range(0.92f32..1.08);
    draw_background(&mut canvas, plan, &mut rng, brightness);
    let geom = draw_face(&mut canvas, config, plan, &mut rng, brightness);
    if let Some(cue) = plan.cue.filter(|_| include_cue && config.cue_active(frame)) {
        if cue.in_background {
            draw_background_cue(&mut canvas, &cue, config.cue_strength);
        } else {
            draw_face_cue(&mut canvas, cue.attack_type.code(), &geom, config.cue_strength);
        }
    }
    canvas.to_image()
}

/// Generated frames plus paired manifests.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub full: DatasetManifest,
    pub crop: DatasetManifest,
    pub store: MemoryStore,
    /// Cue placement per record index (shared by both manifests); `None` for
    /// genuine frames and frames outside the configured cue range.
    pub cues: Vec<Option<CueInfo>>,
    pub plans: Vec<VideoPlan>,
}

impl SyntheticDataset {
    pub fn manifest(&self, variant: Variant) -> &DatasetManifest {
        match variant {
            Variant::Full => &self.full,
            Variant::Crop => &self.crop,
        }
    }

    /// Writes PNGs under `<root>/<variant>/<subject>/<video>/<frame>.png` and
    /// the two manifests as `manifest_full.csv` and `manifest_crop.csv`.
    pub fn write_to(&self, root: &Path) -> Result<()> {
        for manifest in [&self.full, &self.crop] {
            for r in &manifest.records {
                let path = root.join(&r.path);
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                self.store.get(&r.path).expect("generated image present").save(&path)?;
            }
        }
        save_manifest(&root.join(manifest_file_name(Variant::Full)), &self.full)?;
        save_manifest(&root.join(manifest_file_name(Variant::Crop)), &self.crop)
    }
}

pub fn manifest_file_name(variant: Variant) -> String {
    format!("manifest_{variant}.csv")
}

pub fn image_path(variant: Variant, subject_id: u32, video_id: &str, frame: u32) -> String {
    format!("{variant}/{subject_id}/{video_id}/{frame}.png")
}

/// Generates the dataset described by `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let plans = plan_videos(config)?;
    let face = config.face_box();
    let mut store = MemoryStore::default();
    let (mut full, mut crop, mut cues) = (Vec::new(), Vec::new(), Vec::new());
    for plan in &plans {
        for frame in 0..config.frames_per_video {
            let image = render_frame(config, plan, frame, true);
            let cropped = image::imageops::crop_imm(&image, face.x0, face.y0, face.width(), face.height()).to_image();
            for (variant, img, records) in [(Variant::Full, image, &mut full), (Variant::Crop, cropped, &mut crop)] {
                let path = image_path(variant, plan.subject_id, &plan.video_id, frame);
                records.push(SampleRecord {
                    path: path.clone(),
                    subject_id: plan.subject_id,
                    video_id: plan.video_id.clone(),
                    frame_index: frame,
                    label: plan.attack_type.label(),
                    attack_type: plan.attack_type,
                    variant,
                    split: plan.split,
                });
                store.insert(path, img);
            }
            cues.push(plan.cue.filter(|_| config.cue_active(frame)));
        }
    }
    Ok(SyntheticDataset {
        config: config.clone(),
        full: DatasetManifest::new(DatasetName::Synthetic, full),
        crop: DatasetManifest::new(DatasetName::Synthetic, crop),
        store,
        cues,
        plans,
    })
}
