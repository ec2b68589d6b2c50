//! Frame extraction from videos.
//!
//! A video is either an animated GIF or a directory of still frames (PNG or
//! JPEG, ordered by the number in the file stem, falling back to the name).
//! Other containers should be decoded to one of these forms first.

use std::path::{Path, PathBuf};

use image::{AnimationDecoder, RgbImage};

use crate::error::{PadError, Result};

fn ingestion(path: &Path, reason: impl ToString) -> PadError {
    PadError::Ingestion { path: path.to_path_buf(), reason: reason.to_string() }
}

fn is_still_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ingestion(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_still_image(p))
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
        (digits.parse::<u64>().ok(), stem)
    };
    files.sort_by_key(key);
    Ok(files)
}

/// Number of frames in a video, decoding only as much as needed.
fn decode_all(video: &Path) -> Result<Vec<RgbImage>> {
    if video.is_dir() {
        let files = frame_files(video)?;
        if files.is_empty() {
            return Err(ingestion(video, "directory holds no frames"));
        }
        return files
            .iter()
            .map(|f| image::open(f).map(|i| i.to_rgb8()).map_err(|e| ingestion(f, e)))
            .collect();
    }
    let ext = video.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("gif") => {
            let file = std::fs::File::open(video).map_err(|e| ingestion(video, e))?;
            let decoder = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(file))
                .map_err(|e| ingestion(video, e))?;
            let frames = decoder.into_frames().collect_frames().map_err(|e| ingestion(video, e))?;
            if frames.is_empty() {
                return Err(ingestion(video, "animation holds no frames"));
            }
            Ok(frames
                .into_iter()
                .map(|f| image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8())
                .collect())
        }
        _ if is_still_image(video) => {
            let img = image::open(video).map_err(|e| ingestion(video, e))?;
            Ok(vec![img.to_rgb8()])
        }
        _ => Err(ingestion(video, "unsupported video container; provide frames or a GIF")),
    }
}

/// Frames at indices `0, stride, 2*stride, ...`, tagged with their original frame number.
///
/// The whole video is decoded before anything is returned, so a corrupt file
/// never yields a partial frame list.
pub fn extract_frames(video: &Path, stride: usize) -> Result<Vec<(u32, RgbImage)>> {
    if stride == 0 {
        return Err(PadError::Config("frame stride must be at least 1".into()));
    }
    let frames = decode_all(video)?;
    Ok(frames
        .into_iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, f)| (i as u32, f))
        .collect())
}
