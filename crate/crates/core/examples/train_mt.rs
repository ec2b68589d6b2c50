//! Multi-task training: binary head plus an 8-way attack-type head.
//!
//! `cargo run --release --example train_mt -- [epochs] [seed]`

use facepad::dataset::{generate_synthetic, Split, SyntheticConfig, Variant};
use facepad::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use facepad::model::{build_classifier, AnyModel, Heads, ModelConfig};
use facepad::training::{score_manifest, train, Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(3);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let data = generate_synthetic(&SyntheticConfig { n_subjects: 16, train_subjects: 11, seed, ..Default::default() })?;
    let manifest = data.manifest(Variant::Full);
    let model = build_classifier(&ModelConfig::toy(64, Heads::BinaryPlusMulticlass, seed))?;
    let config = TrainConfig { strategy: Strategy::Mt, epochs, seed, ..Default::default() };
    let (model, log) = train(AnyModel::Classifier(model), manifest, &data.store, &config, None)?;
    println!("summed loss per epoch: {:?}", log.phase("train"));

    let scores = score_manifest(&model, manifest, &data.store, Split::Test, config.strategy.scoring_mode())?;
    let report = MetricsReport::compute(&scores, DEFAULT_THRESHOLD, config.strategy.scoring_mode())?;
    println!("APCER {:.2}%  BPCER {:.2}%  EER {:.2}%", report.apcer * 100.0, report.bpcer * 100.0, report.eer * 100.0);
    Ok(())
}
