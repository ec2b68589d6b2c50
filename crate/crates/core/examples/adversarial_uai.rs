//! Adversarial invariance training: alternating MAIN and ADVERSARY updates.
//!
//! `cargo run --release --example adversarial_uai -- [epochs] [seed]`

use facepad::dataset::{generate_synthetic, Split, SyntheticConfig, Variant};
use facepad::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use facepad::model::{build_uai, Heads, ModelConfig, UaiConfig};
use facepad::training::{score_manifest, train_adversarial, Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(3);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let data = generate_synthetic(&SyntheticConfig { n_subjects: 12, train_subjects: 8, seed, ..Default::default() })?;
    let manifest = data.manifest(Variant::Full);
    let model = build_uai(&UaiConfig::for_base(ModelConfig::toy(64, Heads::BinaryOnly, seed)))?;
    let config = TrainConfig { strategy: Strategy::AdvBc, epochs, seed, ..Default::default() };
    for epoch in 0..epochs {
        println!("epoch {epoch}: alpha {:.3}", config.alpha_schedule.alpha_at(epoch));
    }
    let (model, log) = train_adversarial(model, manifest, &data.store, &config)?;
    println!("main loss:      {:?}", log.phase("main"));
    println!("adversary loss: {:?}", log.phase("adversary"));

    let mode = config.strategy.scoring_mode();
    let scores = score_manifest(&model, manifest, &data.store, Split::Test, mode)?;
    let report = MetricsReport::compute(&scores, DEFAULT_THRESHOLD, mode)?;
    println!("EER {:.2}%", report.eer * 100.0);
    Ok(())
}
