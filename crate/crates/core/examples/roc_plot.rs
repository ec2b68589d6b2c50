//! ROC curves with a logarithmic BPCER axis for two simulated detectors.
//!
//! `cargo run --example roc_plot -- [output.svg]`

use facepad::dataset::Label;
use facepad::metrics::{eer, roc_points, scores_from_pairs};
use facepad::plot::save_roc_svg;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn simulated(separation: f64, seed: u64) -> Vec<(f64, Label)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    (0..2000)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Attack } else { Label::Genuine };
            let mean = if label == Label::Attack { separation } else { 0.0 };
            let z: f64 = mean + noise.sample(&mut rng);
            (1.0 / (1.0 + (-z).exp()), label)
        })
        .collect()
}

fn main() -> facepad::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "roc.svg".into());
    let mut curves = Vec::new();
    for (name, separation) in [("strong", 4.0), ("weak", 1.5)] {
        let scores = scores_from_pairs(&simulated(separation, 7));
        println!("{name}: EER {:.2}%", eer(&scores)?.value * 100.0);
        curves.push((name.to_string(), roc_points(&scores)?));
    }
    save_roc_svg(std::path::Path::new(&out), &curves)?;
    println!("wrote {out}");
    Ok(())
}
