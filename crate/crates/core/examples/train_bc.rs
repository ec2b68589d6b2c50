//! Binary classification on synthetic replay attacks, with and without background.
//!
//! `cargo run --release --example train_bc -- [epochs] [seed]`

use std::time::Instant;

use facepad::dataset::{generate_synthetic, SyntheticConfig, Split, Variant};
use facepad::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use facepad::model::{build_classifier, AnyModel, Heads, ModelConfig};
use facepad::training::{score_manifest, train, Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(4);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let data = generate_synthetic(&SyntheticConfig {
        attack_codes: [3, 4].into(),
        background_cue_classes: [3, 4].into(),
        seed,
        ..Default::default()
    })?;
    println!(
        "{} train / {} test images per variant",
        data.full.split(Split::Train).count(),
        data.full.split(Split::Test).count()
    );

    for variant in [Variant::Full, Variant::Crop] {
        let start = Instant::now();
        let model = build_classifier(&ModelConfig::toy(64, Heads::BinaryOnly, seed))?;
        let config = TrainConfig { strategy: Strategy::Bc, epochs, seed, ..Default::default() };
        let manifest = data.manifest(variant);
        let (model, log) = train(AnyModel::Classifier(model), manifest, &data.store, &config, None)?;
        let scores = score_manifest(&model, manifest, &data.store, Split::Test, config.strategy.scoring_mode())?;
        let report = MetricsReport::compute(&scores, DEFAULT_THRESHOLD, config.strategy.scoring_mode())?;
        println!(
            "{variant}: losses {:?} APCER {:.2}% BPCER {:.2}% EER {:.2}% ({:.1}s)",
            log.phase("train").iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>(),
            report.apcer * 100.0,
            report.bpcer * 100.0,
            report.eer * 100.0,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
