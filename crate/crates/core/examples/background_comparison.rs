//! Same strategy trained on full frames and on face crops, reported as a table.
//!
//! `cargo run --release --example background_comparison -- [strategy] [epochs]`

use facepad::dataset::SyntheticConfig;
use facepad::protocols::{render_table, run_background_comparison, DatasetSource, ExperimentConfig};
use facepad::training::{Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let strategy: Strategy = args.next().map(|a| a.parse()).transpose()?.unwrap_or(Strategy::Bc);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(3);

    let base = ExperimentConfig {
        strategy,
        train_dataset: DatasetSource::Synthetic {
            config: SyntheticConfig { n_subjects: 16, train_subjects: 11, ..Default::default() },
        },
        train_config: TrainConfig { epochs, ..Default::default() },
        output_dir: std::env::temp_dir().join("facepad_background_comparison"),
        ..Default::default()
    };
    let comparison = run_background_comparison(&base)?;
    for row in comparison.rows() {
        println!("{:<8} background={:<3} EER {:.2}%", row.method, row.background, row.eer_pct);
    }
    print!("{}", render_table(&[comparison.crop, comparison.full]));
    Ok(())
}
