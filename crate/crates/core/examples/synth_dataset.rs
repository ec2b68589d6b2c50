//! Generates the synthetic dataset and writes it to disk as PNGs plus manifests.
//!
//! `cargo run --release --example synth_dataset -- [output_dir] [seed]`

use facepad::dataset::{generate_synthetic, Split, SyntheticConfig, Variant};

fn main() -> facepad::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic_data".into());
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let config = SyntheticConfig { n_subjects: 8, train_subjects: 6, seed, ..Default::default() };
    let data = generate_synthetic(&config)?;
    for variant in [Variant::Full, Variant::Crop] {
        let m = data.manifest(variant);
        println!(
            "{variant}: {} frames, {} train subjects, {} test subjects, attack codes {:?}",
            m.len(),
            m.subjects(Split::Train).len(),
            m.subjects(Split::Test).len(),
            m.attack_codes_present
        );
    }
    let background = data.cues.iter().flatten().filter(|c| c.in_background).count();
    let in_face = data.cues.iter().flatten().count() - background;
    println!("cues: {background} in the background, {in_face} on the face");
    if let Some((i, cue)) = data.cues.iter().enumerate().find_map(|(i, c)| c.as_ref().filter(|c| c.in_background).map(|c| (i, c))) {
        println!("e.g. {} carries a code {} cue at {:?}", data.full.records[i].path, cue.attack_type.code(), cue.bbox);
    }
    data.write_to(std::path::Path::new(&out))?;
    println!("written to {out}");
    Ok(())
}
