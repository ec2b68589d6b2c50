//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! `cargo test --release --test acceptance`

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use facepad::dataset::{
    generate_synthetic, images_to_tensor, ImageStore, Label, Split, SyntheticConfig, SyntheticDataset, Variant,
};
use facepad::explain::{cam_from_features, default_layer, gradcam_pp, GradCamTarget, HeadChoice};
use facepad::losses::{self, AlphaSchedule};
use facepad::metrics::{apcer, bpcer, eer, scores_from_pairs, MetricsReport, DEFAULT_THRESHOLD};
use facepad::model::{build_classifier, build_uai, checksum, AnyModel, AttackScorer, Heads, ModelConfig, UaiConfig};
use facepad::protocols::{run_experiment, run_experiment_observed, DatasetSource, ExperimentConfig, Protocol};
use facepad::training::dfs::argmax_frame;
use facepad::training::{score_manifest, select_frames, train, RecordingObserver, Strategy, TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------- 1. metrics ----------

/// Counting oracle for the two error rates at one threshold.
fn rates_oracle(pairs: &[(f64, Label)], t: f64) -> (f64, f64) {
    let attacks: Vec<f64> = pairs.iter().filter(|p| p.1 == Label::Attack).map(|p| p.0).collect();
    let genuine: Vec<f64> = pairs.iter().filter(|p| p.1 == Label::Genuine).map(|p| p.0).collect();
    let missed = attacks.iter().filter(|&&s| s.partial_cmp(&t).is_none_or(|o| o.is_lt())).count();
    let rejected = genuine.iter().filter(|&&s| s >= t).count();
    (missed as f64 / attacks.len() as f64, rejected as f64 / genuine.len() as f64)
}

/// Brute-force sweep: every distinct score plus the two endpoints, each
/// evaluated with the O(n) counting oracle; linear interpolation across the
/// crossing of APCER and BPCER.
fn eer_oracle(pairs: &[(f64, Label)]) -> f64 {
    let mut thresholds = vec![-1.0];
    for &(s, _) in pairs {
        if !thresholds.contains(&s) {
            thresholds.push(s);
        }
    }
    thresholds.push(2.0);
    thresholds.sort_by(f64::total_cmp);
    let rates: Vec<(f64, f64)> = thresholds.iter().map(|&t| rates_oracle(pairs, t)).collect();
    let n_a = pairs.iter().filter(|p| p.1 == Label::Attack).count() as f64;
    let n_g = pairs.len() as f64 - n_a;
    // compare on integer counts so equality is exact
    let diff = |r: (f64, f64)| (r.0 * n_a).round() * n_g - (r.1 * n_g).round() * n_a;
    if let Some(r) = rates.iter().find(|&&r| diff(r) == 0.0) {
        return r.0;
    }
    let k = rates.iter().position(|&r| diff(r) > 0.0).expect("crossing");
    let ((a0, b0), (a1, b1)) = (rates[k - 1], rates[k]);
    let w = (b0 - a0) / ((a1 - b1) - (a0 - b0));
    a0 + w * (a1 - a0)
}

fn random_score_set(rng: &mut ChaCha8Rng) -> Vec<(f64, Label)> {
    let n = rng.random_range(2..=500);
    let coarse = rng.random_bool(0.5);
    let mut pairs: Vec<(f64, Label)> = (0..n)
        .map(|_| {
            let label = if rng.random_bool(0.5) { Label::Attack } else { Label::Genuine };
            let raw: f64 = rng.random();
            // coarse sets are rounded to two decimals so ties are frequent
            let s = if coarse { (raw * 100.0).round() / 100.0 } else { raw };
            (s, label)
        })
        .collect();
    pairs[0].1 = Label::Attack;
    pairs[1].1 = Label::Genuine;
    pairs
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pairs = random_score_set(&mut rng);
        let scores = scores_from_pairs(&pairs);
        let got = eer(&scores).map_err(e2s)?.value;
        let want = eer_oracle(&pairs);
        worst = worst.max((got - want).abs());
        for t in [DEFAULT_THRESHOLD, rng.random(), pairs[rng.random_range(0..pairs.len())].0] {
            let (a, b) = rates_oracle(&pairs, t);
            ensure(apcer(&scores, t).map_err(e2s)? == a, format!("APCER mismatch at {t}"))?;
            ensure(bpcer(&scores, t).map_err(e2s)? == b, format!("BPCER mismatch at {t}"))?;
        }
    }
    ensure(worst <= 1e-9, format!("max EER deviation {worst:e}"))?;
    Ok(format!("1000 score sets, max EER deviation {worst:.1e}"))
}

// ---------- 2. losses ----------

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central finite difference of `f` with respect to every entry of `x`.
fn fd(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += H;
            lo[i] -= H;
            (f(&hi) - f(&lo)) / (2.0 * H)
        })
        .collect()
}

fn check_grad(name: &str, analytic: &[f64], numeric: &[f64], worst: &mut f64) -> Result<(), String> {
    for (a, n) in analytic.iter().zip(numeric) {
        let e = rel_err(*a, *n);
        *worst = worst.max(e);
        ensure(e < 1e-4, format!("{name}: analytic {a} vs numeric {n}"))?;
    }
    Ok(())
}

fn close(name: &str, got: f64, want: f64) -> Result<(), String> {
    ensure((got - want).abs() <= 1e-10 * want.abs().max(1.0), format!("{name}: {got} vs {want}"))
}

fn probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.02..0.98)).collect()
}

fn simplex_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((n, m), |_| rng.random_range(0.1..1.0));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

fn one_hot_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    losses::one_hot(&labels, m)
}

fn randn(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

fn as2(v: &[f64], shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(shape, v.to_vec()).unwrap()
}

fn bce_oracle(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(y, p)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())).sum::<f64>() / y.len() as f64
}

fn ce_oracle(y: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..y.nrows() {
        for c in 0..y.ncols() {
            total -= y[[i, c]] * p[[i, c]].ln();
        }
    }
    total / y.nrows() as f64
}

fn mse_oracle(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..x.nrows() {
        for d in 0..x.ncols() {
            total += (x[[i, d]] - y[[i, d]]).powi(2);
        }
    }
    total / x.nrows() as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let (m, d) = (rng.random_range(2..=8), rng.random_range(1..=10));
        let y1: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let p1 = probs(&mut rng, n);
        let y2 = one_hot_rows(&mut rng, n, m);
        let p2 = simplex_rows(&mut rng, n, m);
        let (x, xr) = (randn(&mut rng, n, d), randn(&mut rng, n, d));
        let (e1, e1p) = (randn(&mut rng, n, d), randn(&mut rng, n, d));
        let (e2, e2p) = (randn(&mut rng, n, d + 1), randn(&mut rng, n, d + 1));
        let alpha = rng.random_range(0.0..1.0);

        // values
        let bce = losses::bce(&y1, &p1).map_err(e2s)?;
        close("bce", bce, bce_oracle(&y1, &p1))?;
        let ce = losses::ce(y2.view(), p2.view()).map_err(e2s)?;
        close("ce", ce, ce_oracle(&y2, &p2))?;
        let multi = losses::loss_multi(&y1, &p1, y2.view(), p2.view()).map_err(e2s)?;
        close("loss_multi", multi, bce_oracle(&y1, &p1) + ce_oracle(&y2, &p2))?;
        let mse = losses::mse(x.view(), xr.view()).map_err(e2s)?;
        close("mse", mse, mse_oracle(&x, &xr))?;
        let adv = losses::loss_adv(e1.view(), e2.view(), e1p.view(), e2p.view()).map_err(e2s)?;
        close("loss_adv", adv, -mse_oracle(&e1, &e1p) - mse_oracle(&e2, &e2p))?;
        let cbc = losses::loss_class_bc(&y1, &p1, x.view(), xr.view(), alpha).map_err(e2s)?;
        close("loss_class_bc", cbc, bce_oracle(&y1, &p1) + alpha * mse_oracle(&x, &xr))?;
        let cmt = losses::loss_class_mt(&y1, &p1, y2.view(), p2.view(), x.view(), xr.view(), alpha).map_err(e2s)?;
        close("loss_class_mt", cmt, bce_oracle(&y1, &p1) + ce_oracle(&y2, &p2) + alpha * mse_oracle(&x, &xr))?;

        // gradients against central differences of the oracles
        let g = losses::bce_grad(&y1, &p1).map_err(e2s)?;
        check_grad("bce", &g, &fd(&p1, |p| bce_oracle(&y1, p)), &mut worst)?;
        let g = losses::ce_grad(y2.view(), p2.view()).map_err(e2s)?;
        let flat = p2.iter().copied().collect::<Vec<_>>();
        check_grad("ce", g.as_slice().unwrap(), &fd(&flat, |p| ce_oracle(&y2, &as2(p, (n, m)))), &mut worst)?;
        let g = losses::mse_grad(x.view(), xr.view()).map_err(e2s)?;
        let flat = x.iter().copied().collect::<Vec<_>>();
        check_grad("mse", g.as_slice().unwrap(), &fd(&flat, |v| mse_oracle(&as2(v, (n, d)), &xr)), &mut worst)?;
        let g = losses::loss_adv_grad(e1.view(), e2.view(), e1p.view(), e2p.view()).map_err(e2s)?;
        let flat = e1p.iter().copied().collect::<Vec<_>>();
        let num = fd(&flat, |v| -mse_oracle(&e1, &as2(v, (n, d))) - mse_oracle(&e2, &e2p));
        check_grad("loss_adv/e1'", g.e1_prime.as_slice().unwrap(), &num, &mut worst)?;
        let flat = e2.iter().copied().collect::<Vec<_>>();
        let num = fd(&flat, |v| -mse_oracle(&e1, &e1p) - mse_oracle(&as2(v, (n, d + 1)), &e2p));
        check_grad("loss_adv/e2", g.e2.as_slice().unwrap(), &num, &mut worst)?;
        let g = losses::recon_grad(x.view(), xr.view(), alpha).map_err(e2s)?;
        let flat = xr.iter().copied().collect::<Vec<_>>();
        let num = fd(&flat, |v| bce_oracle(&y1, &p1) + alpha * mse_oracle(&x, &as2(v, (n, d))));
        check_grad("loss_class_bc/x'", g.as_slice().unwrap(), &num, &mut worst)?;
        let num = fd(&p1, |p| bce_oracle(&y1, p) + ce_oracle(&y2, &p2) + alpha * mse_oracle(&x, &xr));
        check_grad("loss_class_mt/p1", &losses::bce_grad(&y1, &p1).map_err(e2s)?, &num, &mut worst)?;
    }
    Ok(format!("7 losses x 100 inputs, max gradient relative error {worst:.1e}"))
}

// ---------- 3. alpha ----------

fn criterion_3() -> Outcome {
    let s = AlphaSchedule::default();
    for e in 0..100usize {
        let want = 0.025 * (e + 1) as f64;
        ensure(s.alpha_at(e) == want, format!("epoch {e}: {} != {want}", s.alpha_at(e)))?;
    }
    Ok("alpha_at(e) == 0.025 * (e + 1) for e in 0..100".into())
}

// ---------- 4. DFS selection ----------

fn select_oracle(probs: &[f32], label: Label, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    match label {
        Label::Attack => idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b))),
        Label::Genuine => idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b))),
    }
    let mut chosen: Vec<usize> = idx.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let n = rng.random_range(3..=30);
        let levels = if i % 2 == 0 { 5 } else { 1_000_000 };
        let probs: Vec<f32> = (0..n).map(|_| rng.random_range(0..=levels) as f32 / levels as f32).collect();
        for label in [Label::Attack, Label::Genuine] {
            ensure(select_frames(&probs, label, 3) == select_oracle(&probs, label, 3), format!("{label:?} {probs:?}"))?;
        }
        let best = argmax_frame(&probs).map_err(e2s)?;
        ensure(best == select_oracle(&probs, Label::Genuine, 1)[0], format!("argmax {probs:?}"))?;
    }
    Ok("10000 vectors agree with the sort oracle".into())
}

// ---------- 5 and 9. background claim and Grad-CAM++ ----------

fn background_data(seed: u64) -> facepad::Result<SyntheticDataset> {
    generate_synthetic(&SyntheticConfig {
        attack_codes: [3, 4].into(),
        background_cue_classes: [3, 4].into(),
        seed,
        ..Default::default()
    })
}

const BC_EPOCHS: usize = 5;

fn bc_eer(data: &SyntheticDataset, variant: Variant, seed: u64) -> facepad::Result<(f64, AnyModel)> {
    let model = build_classifier(&ModelConfig::toy(64, Heads::BinaryOnly, seed))?;
    let config = TrainConfig { strategy: Strategy::Bc, epochs: BC_EPOCHS, seed, ..Default::default() };
    let manifest = data.manifest(variant);
    let (model, _) = train(AnyModel::Classifier(model), manifest, &data.store, &config, None)?;
    let scores = score_manifest(&model, manifest, &data.store, Split::Test, config.strategy.scoring_mode())?;
    Ok((MetricsReport::compute(&scores, DEFAULT_THRESHOLD, config.strategy.scoring_mode())?.eer, model))
}

fn criterion_5(keep: &mut Option<(SyntheticDataset, AnyModel)>) -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let data = background_data(seed).map_err(e2s)?;
        let n_train = data.full.split(Split::Train).count();
        let n_test = data.full.split(Split::Test).count();
        ensure(n_train == 2000 && n_test == 1000, format!("split sizes {n_train}/{n_test}"))?;
        let (full, model) = bc_eer(&data, Variant::Full, seed).map_err(e2s)?;
        let (crop, _) = bc_eer(&data, Variant::Crop, seed).map_err(e2s)?;
        lines.push(format!("seed {seed}: full {:.2}% crop {:.2}%", full * 100.0, crop * 100.0));
        ensure(full <= 0.05, format!("seed {seed}: full EER {:.2}% > 5%", full * 100.0))?;
        ensure(crop >= full + 0.10, format!("seed {seed}: crop EER {:.2}% not 10pp above full", crop * 100.0))?;
        if seed == 0 {
            *keep = Some((data, model));
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= Duration::from_secs(600), format!("took {:.0}s", elapsed.as_secs_f64()))?;
    Ok(format!("{} ({:.0}s)", lines.join(", "), elapsed.as_secs_f64()))
}

fn criterion_9(trained: Option<&(SyntheticDataset, AnyModel)>) -> Outcome {
    let (data, model) = trained.ok_or("no trained full-frame model (criterion 5 failed early)")?;
    let manifest = data.manifest(Variant::Full);
    let layer = default_layer(model.backbone());
    let (mut total, mut inside) = (0usize, 0usize);
    for (i, record) in manifest.records.iter().enumerate() {
        let Some(cue) = data.cues[i].as_ref().filter(|c| c.in_background) else { continue };
        if record.split != Split::Test {
            continue;
        }
        let image = data.store.load(&record.path).map_err(e2s)?;
        let x = images_to_tensor(std::slice::from_ref(&image), model.input_size(), model.normalization());
        if model.attack_probs(&x).map_err(e2s)?[0] < 0.5 {
            continue;
        }
        let heatmap = gradcam_pp(model, &image, 1, &layer).map_err(e2s)?;
        let (px, py) = heatmap.argmax();
        total += 1;
        inside += usize::from(cue.bbox.contains(px as u32, py as u32));
    }
    ensure(total >= 50, format!("only {total} correctly classified background-cue attacks"))?;
    let rate = inside as f64 / total as f64;
    ensure(rate >= 0.8, format!("{inside}/{total} inside the cue box"))?;

    let index = model.backbone().layer_index(&layer).map_err(e2s)?;
    let x = images_to_tensor(&[data.store.load(&manifest.records[0].path).map_err(e2s)?], 64, model.normalization());
    let (features, _) = model.backbone().forward_blocks(&x, 0, index + 1);
    let zeros = Array4::<f32>::zeros(features.raw_dim());
    let grid = cam_from_features(model, &zeros, index, HeadChoice::Binary, 1).map_err(e2s)?;
    ensure(grid.iter().all(|&v| v == 0.0), "zeroed feature maps gave a non-zero heatmap")?;
    Ok(format!("{inside}/{total} ({:.1}%) peaks inside the cue box; zero maps give zero heatmaps", rate * 100.0))
}

// ---------- 6. multi-task ----------

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.random_range(1..=32);
        let y1: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let p1 = probs(&mut rng, n);
        let y2 = one_hot_rows(&mut rng, n, 8);
        let p2 = simplex_rows(&mut rng, n, 8);
        let multi = losses::loss_multi(&y1, &p1, y2.view(), p2.view()).map_err(e2s)?;
        let sum = losses::bce(&y1, &p1).map_err(e2s)? + losses::ce(y2.view(), p2.view()).map_err(e2s)?;
        ensure(multi.to_bits() == sum.to_bits(), format!("{multi} != {sum}"))?;
    }
    let model = build_classifier(&ModelConfig::toy(32, Heads::BinaryPlusMulticlass, 0)).map_err(e2s)?;
    let out = model.predict(&Array4::from_shape_fn((3, 3, 32, 32), |(i, c, y, x)| ((i + c + y * x) % 7) as f32 / 7.0));
    ensure(out.binary.dim() == (3, 2), format!("binary head {:?}", out.binary.dim()))?;
    let multi = out.multiclass.ok_or("no multiclass head")?;
    ensure(multi.dim() == (3, 8), format!("multiclass head {:?}", multi.dim()))?;
    Ok("loss_multi == bce + ce bitwise on 1000 batches; heads are 2- and 8-way".into())
}

// ---------- 7. UAI ----------

fn random_batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> facepad::dataset::Batch {
    facepad::dataset::Batch {
        images: Array4::from_shape_fn((n, 3, size, size), |_| rng.random::<f32>()),
        binary_labels: (0..n).map(|i| i % 2).collect(),
        attack_labels: (0..n).map(|i| if i % 2 == 0 { 0 } else { 1 + i % 7 }).collect(),
        indices: (0..n).collect(),
    }
}

fn uai_groups(model: &AnyModel) -> (u64, u64) {
    match model {
        AnyModel::Uai(m) => (checksum(m.main_params()), checksum(m.adversary_params())),
        AnyModel::Classifier(_) => unreachable!("adversarial trainer holds a uai model"),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let uai = build_uai(&UaiConfig::for_base(ModelConfig::toy(32, Heads::BinaryOnly, 7))).map_err(e2s)?;
    let x = random_batch(&mut rng, 4, 32).images;
    let (out, _) = uai.forward(&x, None);
    ensure(out.x_recon.dim() == x.dim(), format!("decoder output {:?} vs input {:?}", out.x_recon.dim(), x.dim()))?;

    let config = TrainConfig { strategy: Strategy::AdvBc, ..Default::default() };
    let mut trainer = Trainer::new(AnyModel::Uai(uai), config).map_err(e2s)?;
    let batch = random_batch(&mut rng, 8, 32);
    let (main0, adv0) = uai_groups(trainer.model());
    trainer.main_step(&batch, 0.025).map_err(e2s)?;
    let (main1, adv1) = uai_groups(trainer.model());
    ensure(main1 != main0 && adv1 == adv0, "MAIN step touched the ADVERSARY group or left MAIN unchanged")?;
    trainer.adversary_step(&batch).map_err(e2s)?;
    let (main2, adv2) = uai_groups(trainer.model());
    ensure(main2 == main1 && adv2 != adv1, "ADVERSARY step touched the MAIN group or left ADVERSARY unchanged")?;

    // 10 adversary steps over 10 batches with MAIN frozen; loss on a held batch must drop
    let held = random_batch(&mut rng, 8, 32);
    let objective = |t: &Trainer| -> facepad::Result<f64> {
        let AnyModel::Uai(m) = t.model() else { unreachable!() };
        let emb = m.encode(&held.images);
        let (e1p, e2p, _) = m.disentangle(&emb);
        let f = |a: &Array2<f32>| a.mapv(f64::from);
        Ok(losses::mse(f(&emb.e1).view(), f(&e1p).view())? + losses::mse(f(&emb.e2).view(), f(&e2p).view())?)
    };
    let before = objective(&trainer).map_err(e2s)?;
    let mut step_losses = Vec::new();
    for _ in 0..10 {
        step_losses.push(trainer.adversary_step(&random_batch(&mut rng, 8, 32)).map_err(e2s)?);
    }
    let after = objective(&trainer).map_err(e2s)?;
    ensure(uai_groups(trainer.model()).0 == main2, "MAIN changed during adversary steps")?;
    ensure(after < before, format!("adversary objective {before:.4} -> {after:.4}"))?;
    Ok(format!("groups isolated, decoder shape {:?}, adversary objective {before:.4} -> {after:.4}", x.dim()))
}

// ---------- 8. unseen attack isolation ----------

fn small_synthetic() -> SyntheticConfig {
    SyntheticConfig { n_subjects: 6, train_subjects: 4, videos_per_subject: 14, frames_per_video: 4, ..Default::default() }
}

fn criterion_8(root: &std::path::Path) -> Outcome {
    let held_out = 3u8;
    let config = ExperimentConfig {
        protocol: Protocol::UnseenAttack,
        attack_code: Some(held_out),
        train_dataset: DatasetSource::Synthetic { config: small_synthetic() },
        train_config: TrainConfig { epochs: 2, batch_size: 16, ..Default::default() },
        output_dir: root.join("unseen"),
        ..Default::default()
    };
    let mut observer = RecordingObserver::default();
    let result = run_experiment_observed(&config, Some(&mut observer)).map_err(e2s)?;
    let seen: BTreeSet<usize> = observer.batches.iter().flat_map(|(_, codes)| codes.iter().copied()).collect();
    ensure(!observer.batches.is_empty(), "no training batches recorded")?;
    ensure(!seen.contains(&(held_out as usize)), format!("held-out code seen in training: {seen:?}"))?;
    let scores = facepad::metrics::load_scores(&result.checkpoint.parent().unwrap().join("scores.csv")).map_err(e2s)?;
    let test_codes: BTreeSet<u8> = scores.iter().map(|s| s.attack_type.code()).collect();
    ensure(test_codes == [0, held_out].into(), format!("test codes {test_codes:?}"))?;
    Ok(format!("{} batches, training codes {seen:?}, test codes {test_codes:?}", observer.batches.len()))
}

// ---------- 10. reproducibility ----------

fn criterion_10(root: &std::path::Path) -> Outcome {
    let mut checked = Vec::new();
    for strategy in [Strategy::Mt, Strategy::AdvDfs] {
        let run = |dir: &str| {
            let config = ExperimentConfig {
                strategy,
                train_dataset: DatasetSource::Synthetic { config: small_synthetic() },
                train_config: TrainConfig { epochs: 2, batch_size: 16, seed: 11, ..Default::default() },
                output_dir: root.join(dir),
                ..Default::default()
            };
            run_experiment(&config)
        };
        let a = run("repro_a").map_err(e2s)?;
        let b = run("repro_b").map_err(e2s)?;
        let log_a = std::fs::read(&a.loss_log).map_err(e2s)?;
        let log_b = std::fs::read(&b.loss_log).map_err(e2s)?;
        ensure(log_a == log_b, format!("{strategy}: loss logs differ"))?;
        ensure(a.metrics == b.metrics, format!("{strategy}: metrics differ"))?;
        checked.push(strategy.display_name());
    }
    Ok(format!("identical loss logs and metrics for {}", checked.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut trained = None;
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        results.push((name, outcome, start.elapsed()));
    };
    record("1 metric oracle equivalence", &mut || {
        let start = Instant::now();
        let r = criterion_1()?;
        ensure(start.elapsed() < Duration::from_secs(30), "over 30s")?;
        Ok(r)
    });
    record("2 loss correctness", &mut || {
        let start = Instant::now();
        let r = criterion_2()?;
        ensure(start.elapsed() < Duration::from_secs(60), "over 60s")?;
        Ok(r)
    });
    record("3 alpha schedule", &mut criterion_3);
    record("4 DFS selection", &mut criterion_4);
    record("5 background directional claim", &mut || criterion_5(&mut trained));
    record("6 MT decomposition", &mut criterion_6);
    record("7 UAI structure", &mut criterion_7);
    record("8 protocol isolation", &mut || criterion_8(tmp.path()));
    record("9 Grad-CAM++ localization", &mut || criterion_9(trained.as_ref()));
    record("10 reproducibility", &mut || criterion_10(tmp.path()));

    let mut failed = 0;
    for (name, outcome, elapsed) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1}s]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.1}s]", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
