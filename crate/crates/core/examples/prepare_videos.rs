//! Frame extraction and face cropping from a directory of GIF videos laid out
//! as `<subject>/<attack_code>/<video>.gif`.
//!
//! `cargo run --example prepare_videos -- [work_dir]`

use facepad::dataset::synthetic::{plan_videos, render_frame};
use facepad::dataset::{load_manifest, prepare_dataset, DatasetName, PrepareOptions, SyntheticConfig, VariantSelection};

fn main() -> facepad::Result<()> {
    let work = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "prepare_demo".into()));
    let input = work.join("videos");
    let config = SyntheticConfig { n_subjects: 2, train_subjects: 1, videos_per_subject: 2, frames_per_video: 30, ..Default::default() };
    // Subjects 2 and 8 of the dataset's numbering fall in different splits.
    for (plan, subject) in plan_videos(&config)?.iter().zip([2, 2, 8, 8]) {
        let dir = input.join(subject.to_string()).join(plan.attack_type.code().to_string());
        std::fs::create_dir_all(&dir)?;
        let frames: Vec<image::RgbImage> =
            (0..config.frames_per_video).map(|f| render_frame(&config, plan, f, true)).collect();
        write_gif(&dir.join(format!("{}.gif", plan.video_id)), &frames)?;
    }

    let options = PrepareOptions {
        input,
        output: work.join("prepared"),
        variant: VariantSelection::Both,
        stride: 10,
        dataset: DatasetName::RoseYoutu,
        boxes: None,
    };
    let summary = prepare_dataset(&options)?;
    println!("{} videos, {} frames, {} files written", summary.videos, summary.frames, summary.written);
    let full = load_manifest(&summary.manifests[0], DatasetName::RoseYoutu)?;
    for r in &full.records {
        println!("{} subject {} {:?} {:?}", r.path, r.subject_id, r.split, r.label);
    }
    // A second run finds everything on disk already.
    println!("rerun wrote {} files", prepare_dataset(&options)?.written);
    Ok(())
}

fn write_gif(path: &std::path::Path, frames: &[image::RgbImage]) -> facepad::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut encoder = image::codecs::gif::GifEncoder::new(file);
    for f in frames {
        let rgba = image::DynamicImage::ImageRgb8(f.clone()).to_rgba8();
        encoder.encode_frame(image::Frame::new(rgba))?;
    }
    Ok(())
}
