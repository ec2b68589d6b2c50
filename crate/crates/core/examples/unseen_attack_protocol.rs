//! Leave-one-attack-out: train on every attack type but one and test on the
//! held-out type, for each attack code in turn.
//!
//! `cargo run --release --example unseen_attack_protocol -- [epochs]`

use facepad::dataset::SyntheticConfig;
use facepad::protocols::{emit_report, render_table, run_experiment, DatasetSource, ExperimentConfig, Protocol};
use facepad::training::TrainConfig;

fn main() -> facepad::Result<()> {
    let epochs: usize = std::env::args().nth(1).map(|a| a.parse().expect("epochs")).unwrap_or(2);
    let out = std::env::temp_dir().join("facepad_unseen_attack");
    let base = ExperimentConfig {
        protocol: Protocol::UnseenAttack,
        train_dataset: DatasetSource::Synthetic {
            config: SyntheticConfig { n_subjects: 10, train_subjects: 7, videos_per_subject: 14, ..Default::default() },
        },
        train_config: TrainConfig { epochs, ..Default::default() },
        output_dir: out.clone(),
        ..Default::default()
    };
    let mut results = Vec::new();
    for code in 1..=7 {
        let config = ExperimentConfig { attack_code: Some(code), ..base.clone() };
        let result = run_experiment(&config)?;
        println!("held out {code}: EER {:.2}%", result.metrics.eer * 100.0);
        results.push(result);
    }
    print!("{}", render_table(&results));
    let (json, _) = emit_report(&results, &out)?;
    println!("report: {}", json.display());
    Ok(())
}
