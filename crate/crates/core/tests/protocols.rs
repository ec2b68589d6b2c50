use facepad::dataset::{SyntheticConfig, Variant};
use facepad::metrics::load_scores;
use facepad::protocols::{
    emit_report, read_report, run_background_comparison, run_experiment, DatasetSource, ExperimentConfig, Protocol,
};
use facepad::training::{LossLog, Strategy, TrainConfig};
use facepad::PadError;

fn source(seed: u64) -> DatasetSource {
    DatasetSource::Synthetic {
        config: SyntheticConfig {
            n_subjects: 6,
            train_subjects: 4,
            videos_per_subject: 14,
            frames_per_video: 3,
            seed,
            ..Default::default()
        },
    }
}

fn base(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        train_dataset: source(0),
        train_config: TrainConfig { epochs: 1, batch_size: 16, ..Default::default() },
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn run_writes_the_result_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { strategy: Strategy::Mt, background: Variant::Crop, ..base(tmp.path()) };
    let result = run_experiment(&config).unwrap();
    let dir = tmp.path().join("same_dataset/mt/crop/0");
    for f in ["config.json", "metrics.json", "losses.csv", "scores.csv", "result.json", "checkpoint/model.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    assert_eq!(result.checkpoint, dir.join("checkpoint"));
    assert_eq!(LossLog::load(&result.loss_log).unwrap().phase("train").len(), 1);
    let saved: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved, config);
}

#[test]
fn invalid_configs_fail_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ExperimentConfig { protocol: Protocol::OneAttack, ..base(tmp.path()) },
        ExperimentConfig { attack_code: Some(2), ..base(tmp.path()) },
        ExperimentConfig { protocol: Protocol::UnseenAttack, attack_code: Some(9), ..base(tmp.path()) },
        ExperimentConfig { protocol: Protocol::CrossDataset, ..base(tmp.path()) },
        ExperimentConfig { protocol: Protocol::CrossDataset, test_dataset: Some(source(0)), ..base(tmp.path()) },
        ExperimentConfig {
            train_dataset: DatasetSource::Prepared { name: facepad::dataset::DatasetName::Nuaa, root: "/missing".into() },
            ..base(tmp.path())
        },
    ];
    for config in cases {
        let err = run_experiment(&config).unwrap_err();
        assert!(matches!(err, PadError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "nothing written");
}

#[test]
fn one_attack_tests_only_that_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { protocol: Protocol::OneAttack, attack_code: Some(5), ..base(tmp.path()) };
    let result = run_experiment(&config).unwrap();
    let scores = load_scores(&result.checkpoint.with_file_name("scores.csv")).unwrap();
    assert!(scores.iter().all(|s| [0, 5].contains(&s.attack_type.code())));
    assert!(scores.iter().any(|s| s.attack_type.code() == 5));
}

#[test]
fn cross_dataset_reuses_the_same_dataset_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let same = run_experiment(&base(tmp.path())).unwrap();
    let cross = ExperimentConfig { protocol: Protocol::CrossDataset, test_dataset: Some(source(7)), ..base(tmp.path()) };
    let result = run_experiment(&cross).unwrap();
    assert_eq!(std::fs::read(&same.loss_log).unwrap(), std::fs::read(&result.loss_log).unwrap());
    assert_eq!(
        std::fs::read(same.checkpoint.join("weights.bin")).unwrap(),
        std::fs::read(result.checkpoint.join("weights.bin")).unwrap()
    );
    assert_ne!(same.metrics, result.metrics);
}

#[test]
fn background_comparison_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let comparison = run_background_comparison(&base(tmp.path())).unwrap();
    let [crop_row, full_row] = comparison.rows();
    assert_eq!((crop_row.background.as_str(), full_row.background.as_str()), ("No", "Yes"));
    assert_eq!(full_row.method, "BC");
    let results = vec![comparison.crop, comparison.full];
    let (json, text) = emit_report(&results, &tmp.path().join("report")).unwrap();
    assert_eq!(read_report(&json).unwrap(), results);
    let table = std::fs::read_to_string(text).unwrap();
    assert!(table.lines().next().unwrap().contains("EER"));
    assert_eq!(table.lines().count(), 3);
}
