//! Dynamic frame selection: train on the hardest frames of each video and
//! score each test video by its most attack-like frame.
//!
//! `cargo run --release --example dfs_training -- [epochs] [seed]`

use facepad::dataset::{generate_synthetic, Split, SyntheticConfig, Variant};
use facepad::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use facepad::model::{build_classifier, AnyModel, Heads, ModelConfig};
use facepad::training::dfs::{dfs_test_select, group_videos};
use facepad::training::{dfs_train, score_manifest, Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(3);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    // Attack cues only appear in frames 3..=6, so frame choice matters.
    let data = generate_synthetic(&SyntheticConfig {
        n_subjects: 16,
        train_subjects: 11,
        cue_frames: Some((3, 6)),
        seed,
        ..Default::default()
    })?;
    let manifest = data.manifest(Variant::Full);
    let model = build_classifier(&ModelConfig::toy(64, Heads::BinaryOnly, seed))?;
    let config = TrainConfig { strategy: Strategy::Dfs, epochs, seed, ..Default::default() };
    let (model, log) = dfs_train(AnyModel::Classifier(model), manifest, &data.store, &config)?;
    println!("loss per epoch: {:?}", log.phase("train"));

    for video in group_videos(manifest, Split::Test)?.iter().take(4) {
        let (frame, prob) = dfs_test_select(&model, video, manifest, &data.store)?;
        println!("{} ({:?}): frame {frame} p(attack)={prob:.3}", video.video_id, video.label);
    }
    let mode = config.strategy.scoring_mode();
    let scores = score_manifest(&model, manifest, &data.store, Split::Test, mode)?;
    let report = MetricsReport::compute(&scores, DEFAULT_THRESHOLD, mode)?;
    println!("{} videos, EER {:.2}%", scores.len(), report.eer * 100.0);
    Ok(())
}
