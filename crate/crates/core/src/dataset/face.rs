use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};

/// Axis-aligned box with exclusive upper corner: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// Clips the box to an image of the given size.
    pub fn clamp_to(&self, width: u32, height: u32) -> BoundingBox {
        BoundingBox {
            x0: self.x0.min(width),
            y0: self.y0.min(height),
            x1: self.x1.min(width),
            y1: self.y1.min(height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f32,
}

/// Face detector returning zero or more scored boxes.
pub trait FaceDetector {
    fn detect(&self, image: &RgbImage) -> Vec<Detection>;
}

/// Reports the central square covering `fraction` of each side, which is
/// where the synthetic generator renders faces.
#[derive(Debug, Clone, Copy)]
pub struct CentralBoxDetector {
    pub fraction: f32,
}

impl Default for CentralBoxDetector {
    fn default() -> Self {
        Self { fraction: 0.5 }
    }
}

/// Central face box of a square synthetic image of side `size`.
pub fn central_box(width: u32, height: u32, fraction: f32) -> BoundingBox {
    let bw = (width as f32 * fraction).round() as u32;
    let bh = (height as f32 * fraction).round() as u32;
    let x0 = (width - bw) / 2;
    let y0 = (height - bh) / 2;
    BoundingBox::new(x0, y0, x0 + bw, y0 + bh)
}

impl FaceDetector for CentralBoxDetector {
    fn detect(&self, image: &RgbImage) -> Vec<Detection> {
        vec![Detection { bbox: central_box(image.width(), image.height(), self.fraction), confidence: 1.0 }]
    }
}

/// Fixed detections regardless of the image; handy for tests and adapters
/// that read precomputed boxes.
#[derive(Debug, Clone, Default)]
pub struct FixedDetector {
    pub detections: Vec<Detection>,
}

impl FaceDetector for FixedDetector {
    fn detect(&self, _image: &RgbImage) -> Vec<Detection> {
        self.detections.clone()
    }
}

/// Crops the highest-confidence detection (first one on ties), using the raw box.
pub fn crop_face(image: &RgbImage, detector: &dyn FaceDetector) -> Result<RgbImage> {
    let detections = detector.detect(image);
    let best = detections
        .iter()
        .fold(None::<&Detection>, |best, d| match best {
            Some(b) if b.confidence >= d.confidence => Some(b),
            _ => Some(d),
        })
        .ok_or(PadError::NoFace)?;
    let bbox = best.bbox.clamp_to(image.width(), image.height());
    if bbox.width() == 0 || bbox.height() == 0 {
        return Err(PadError::NoFace);
    }
    Ok(image::imageops::crop_imm(image, bbox.x0, bbox.y0, bbox.width(), bbox.height()).to_image())
}
