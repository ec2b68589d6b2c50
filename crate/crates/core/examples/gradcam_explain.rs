//! Grad-CAM++ on a model trained with background visible: checks whether the
//! heatmap peak lands on the background attack cue and saves overlays.
//!
//! `cargo run --release --example gradcam_explain -- [output_dir] [epochs]`

use facepad::dataset::{generate_synthetic, ImageStore, Split, SyntheticConfig, Variant};
use facepad::explain::{default_layer, gradcam_pp, overlay, save_overlay, GradCamTarget};
use facepad::model::{build_classifier, AnyModel, AttackScorer, Heads, ModelConfig};
use facepad::training::{train, Strategy, TrainConfig};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "gradcam_out".into()));
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(5);

    let data = generate_synthetic(&SyntheticConfig {
        attack_codes: [3, 4].into(),
        background_cue_classes: [3, 4].into(),
        ..Default::default()
    })?;
    let manifest = data.manifest(Variant::Full);
    let model = build_classifier(&ModelConfig::toy(64, Heads::BinaryOnly, 0))?;
    let config = TrainConfig { strategy: Strategy::Bc, epochs, ..Default::default() };
    let (model, _) = train(AnyModel::Classifier(model), manifest, &data.store, &config, None)?;
    let layer = default_layer(model.backbone());

    let (mut explained, mut hits, mut saved) = (0, 0, 0);
    for (i, record) in manifest.records.iter().enumerate() {
        let Some(cue) = data.cues[i].as_ref().filter(|c| c.in_background) else { continue };
        if record.split != Split::Test {
            continue;
        }
        let image = data.store.load(&record.path)?;
        let tensor = facepad::dataset::images_to_tensor(std::slice::from_ref(&image), 64, model.normalization());
        let prob = model.attack_probs(&tensor)?[0];
        if prob < 0.5 {
            continue;
        }
        let heatmap = gradcam_pp(&model, &image, 1, &layer)?;
        let (x, y) = heatmap.argmax();
        explained += 1;
        hits += usize::from(cue.bbox.contains(x as u32, y as u32));
        if saved < 5 {
            save_overlay(&out.join(format!("attack_{i}.png")), &overlay(&heatmap, &image, 0.5)?, &heatmap, prob as f64)?;
            saved += 1;
        }
    }
    println!("{hits}/{explained} correctly detected background-cue attacks peak inside the cue box");
    println!("overlays in {}", out.display());
    Ok(())
}
