//! APCER/BPCER at a fixed threshold, EER and ROC points from raw scores.
//!
//! `cargo run --example metrics_eer`

use facepad::dataset::Label;
use facepad::metrics::{apcer, bpcer, eer, roc_points, scores_from_pairs, DEFAULT_THRESHOLD};

fn main() -> facepad::Result<()> {
    let pairs = [
        (0.95, Label::Attack),
        (0.80, Label::Attack),
        (0.55, Label::Attack),
        (0.40, Label::Attack),
        (0.60, Label::Genuine),
        (0.30, Label::Genuine),
        (0.20, Label::Genuine),
        (0.05, Label::Genuine),
    ];
    let scores = scores_from_pairs(&pairs);
    println!("APCER@{DEFAULT_THRESHOLD}: {:.1}%", apcer(&scores, DEFAULT_THRESHOLD)? * 100.0);
    println!("BPCER@{DEFAULT_THRESHOLD}: {:.1}%", bpcer(&scores, DEFAULT_THRESHOLD)? * 100.0);
    let e = eer(&scores)?;
    println!("EER: {:.1}% at threshold {:.3}", e.value * 100.0, e.threshold);
    for p in roc_points(&scores)? {
        println!("  t={:.3}  APCER={:.2}  BPCER={:.2}", p.threshold, p.apcer, p.bpcer);
    }
    // A single-class score set has no defined BPCER.
    let attacks_only = scores_from_pairs(&[(0.9, Label::Attack)]);
    println!("genuine-free BPCER: {}", bpcer(&attacks_only, 0.5).unwrap_err());
    Ok(())
}
