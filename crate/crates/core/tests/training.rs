use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use proptest::strategy::Strategy as PropStrategy;

use facepad::dataset::{generate_synthetic, images_to_tensor, ImageStore, Label, Split, SyntheticConfig, Variant};
use facepad::explain::{default_layer, gradcam_pp, overlay, GradCamTarget};
use facepad::metrics::{apcer, bpcer, eer, roc_points, scores_from_pairs, MetricsReport, ScoringMode};
use facepad::model::{build_classifier, build_uai, checkpoint, AnyModel, AttackScorer, Heads, ModelConfig, UaiConfig};
use facepad::training::{group_videos, score_manifest, train, Strategy, TrainConfig};

fn small() -> SyntheticConfig {
    SyntheticConfig { n_subjects: 6, train_subjects: 4, videos_per_subject: 6, frames_per_video: 4, ..Default::default() }
}

fn model_for(strategy: Strategy) -> AnyModel {
    let heads = if strategy.is_multitask() { Heads::BinaryPlusMulticlass } else { Heads::BinaryOnly };
    let base = ModelConfig::toy(32, heads, 0);
    if strategy.is_adversarial() {
        AnyModel::Uai(build_uai(&UaiConfig::for_base(base)).unwrap())
    } else {
        AnyModel::Classifier(build_classifier(&base).unwrap())
    }
}

#[test]
fn every_strategy_trains_and_scores() {
    let data = generate_synthetic(&small()).unwrap();
    let manifest = data.manifest(Variant::Full);
    let n_test_videos = group_videos(manifest, Split::Test).unwrap().len();
    for strategy in Strategy::ALL {
        let config = TrainConfig { strategy, epochs: 2, batch_size: 16, ..Default::default() };
        let (model, log) = train(model_for(strategy), manifest, &data.store, &config, None).unwrap();
        let phases: &[&str] = if strategy.is_adversarial() { &["main", "adversary"] } else { &["train"] };
        for phase in phases {
            let losses = log.phase(phase);
            assert_eq!(losses.len(), 2, "{strategy} {phase}");
            assert!(losses.iter().all(|l| l.is_finite()), "{strategy} {phase}");
        }
        let scores = score_manifest(&model, manifest, &data.store, Split::Test, strategy.scoring_mode()).unwrap();
        let expected = if strategy.is_dfs() { n_test_videos } else { manifest.split(Split::Test).count() };
        assert_eq!(scores.len(), expected, "{strategy}");
    }
}

#[test]
fn bc_loss_falls_on_separable_data() {
    let data = generate_synthetic(&SyntheticConfig { attack_codes: [3].into(), ..small() }).unwrap();
    let config = TrainConfig { strategy: Strategy::Bc, epochs: 4, batch_size: 16, ..Default::default() };
    let (_, log) = train(model_for(Strategy::Bc), data.manifest(Variant::Full), &data.store, &config, None).unwrap();
    let losses = log.phase("train");
    assert!(losses[3] < losses[0], "{losses:?}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = generate_synthetic(&small()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let image = data.store.load(&data.full.records[0].path).unwrap();
    for strategy in [Strategy::Mt, Strategy::AdvBc] {
        let model = model_for(strategy);
        let x = images_to_tensor(std::slice::from_ref(&image), 32, model.normalization());
        let dir = tmp.path().join(strategy.as_str());
        model.save(&dir).unwrap();
        let back = checkpoint::load(&dir).unwrap();
        assert_eq!(model.attack_probs(&x).unwrap(), back.attack_probs(&x).unwrap());
    }
}

#[test]
fn gradcam_heatmap_is_normalized_and_overlays() {
    let data = generate_synthetic(&small()).unwrap();
    let model = model_for(Strategy::Bc);
    let image = data.store.load(&data.full.records[5].path).unwrap();
    let heatmap = gradcam_pp(&model, &image, 1, &default_layer(model.backbone())).unwrap();
    assert_eq!(heatmap.values.dim(), (32, 32));
    assert!(heatmap.values.iter().all(|v| (0.0..=1.0).contains(v)));
    let resized = image::imageops::resize(&image, 32, 32, image::imageops::FilterType::Triangle);
    assert_eq!(overlay(&heatmap, &resized, 0.4).unwrap().dimensions(), (32, 32));
    assert!(overlay(&heatmap, &image, 0.4).is_err());
    assert!(gradcam_pp(&model, &image, 1, "no_such_layer").is_err());
}

#[test]
fn metrics_examples() {
    let perfect = scores_from_pairs(&[(0.9, Label::Attack), (0.8, Label::Attack), (0.1, Label::Genuine), (0.2, Label::Genuine)]);
    assert_eq!(eer(&perfect).unwrap().value, 0.0);
    let inverted = scores_from_pairs(&[(0.1, Label::Attack), (0.9, Label::Genuine)]);
    assert_eq!(eer(&inverted).unwrap().value, 1.0);
    let report = MetricsReport::compute(&perfect, 0.5, ScoringMode::PerFrame).unwrap();
    assert_eq!((report.apcer, report.bpcer, report.n_attack, report.n_genuine), (0.0, 0.0, 2, 2));
    // a score exactly at the threshold counts as an attack
    let edge = scores_from_pairs(&[(0.5, Label::Attack), (0.5, Label::Genuine)]);
    assert_eq!((apcer(&edge, 0.5).unwrap(), bpcer(&edge, 0.5).unwrap()), (0.0, 1.0));
}

fn score_set() -> impl PropStrategy<Value = Vec<(f64, Label)>> {
    proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 2..100).prop_map(|v| {
        let mut pairs: Vec<(f64, Label)> =
            v.into_iter().map(|(s, a)| (s, if a { Label::Attack } else { Label::Genuine })).collect();
        pairs[0].1 = Label::Attack;
        pairs[1].1 = Label::Genuine;
        pairs
    })
}

proptest! {
    #[test]
    fn error_rates_are_monotone(pairs in score_set(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let scores = scores_from_pairs(&pairs);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(apcer(&scores, lo).unwrap() <= apcer(&scores, hi).unwrap());
        prop_assert!(bpcer(&scores, lo).unwrap() >= bpcer(&scores, hi).unwrap());
    }

    #[test]
    fn eer_lies_between_rates_on_the_roc(pairs in score_set()) {
        let scores = scores_from_pairs(&pairs);
        let e = eer(&scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.value));
        let roc = roc_points(&scores).unwrap();
        prop_assert_eq!((roc[0].apcer, roc[0].bpcer), (1.0, 0.0));
        let last = roc.last().unwrap();
        prop_assert_eq!((last.apcer, last.bpcer), (0.0, 1.0));
        for w in roc.windows(2) {
            prop_assert!(w[0].threshold > w[1].threshold);
            prop_assert!(w[0].apcer >= w[1].apcer && w[0].bpcer <= w[1].bpcer);
        }
    }

    #[test]
    fn eer_is_invariant_to_record_order(pairs in score_set(), rot in 0usize..100) {
        let mut rotated = pairs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let a = eer(&scores_from_pairs(&pairs)).unwrap().value;
        let b = eer(&scores_from_pairs(&rotated)).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}
