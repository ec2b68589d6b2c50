//! Experiment runner: same-dataset, cross-dataset, one-attack and
//! unseen-attack protocols, each on full frames or face crops.
//!
//! Every run writes `<output_dir>/<protocol>/<strategy>/<variant>/<seed>/`
//! containing `config.json`, `metrics.json`, `losses.csv`, `scores.csv`,
//! `result.json` and a `checkpoint/` directory.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::synthetic::manifest_file_name;
use crate::dataset::{
    filter_attacks, generate_synthetic, load_manifest, DatasetManifest, DatasetName, DiskStore, ImageStore,
    Split, SyntheticConfig, Variant,
};
use crate::error::{PadError, Result};
use crate::metrics::{save_scores, MetricsReport, DEFAULT_THRESHOLD};
use crate::model::checkpoint;
use crate::model::{build_classifier, build_uai, AnyModel, Heads, ModelConfig, UaiConfig};
use crate::training::{score_manifest, train, BatchObserver, LossLog, Strategy, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    SameDataset,
    CrossDataset,
    OneAttack,
    UnseenAttack,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::SameDataset => "same_dataset",
            Protocol::CrossDataset => "cross_dataset",
            Protocol::OneAttack => "one_attack",
            Protocol::UnseenAttack => "unseen_attack",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = PadError;
    fn from_str(s: &str) -> Result<Self> {
        [Protocol::SameDataset, Protocol::CrossDataset, Protocol::OneAttack, Protocol::UnseenAttack]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| PadError::Config(format!("unknown protocol '{s}'")))
    }
}

/// Where a dataset comes from: generated in memory, or a prepared directory
/// holding `manifest_full.csv`, `manifest_crop.csv` and the images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { config: SyntheticConfig },
    Prepared { name: DatasetName, root: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic { config: SyntheticConfig::default() }
    }
}

impl DatasetSource {
    pub fn name(&self) -> DatasetName {
        match self {
            DatasetSource::Synthetic { .. } => DatasetName::Synthetic,
            DatasetSource::Prepared { name, .. } => *name,
        }
    }

    /// Cheap availability check, run before any compute.
    pub fn check(&self, variant: Variant) -> Result<()> {
        match self {
            DatasetSource::Synthetic { config } => config.validate(),
            DatasetSource::Prepared { root, .. } => {
                let path = root.join(manifest_file_name(variant));
                if path.is_file() {
                    Ok(())
                } else {
                    Err(PadError::Config(format!("missing manifest {}", path.display())))
                }
            }
        }
    }

    pub fn load(&self, variant: Variant) -> Result<LoadedDataset> {
        match self {
            DatasetSource::Synthetic { config } => {
                let data = generate_synthetic(config)?;
                let manifest = data.manifest(variant).clone();
                Ok(LoadedDataset { manifest, store: Box::new(data.store) })
            }
            DatasetSource::Prepared { name, root } => {
                self.check(variant)?;
                let manifest = load_manifest(&root.join(manifest_file_name(variant)), *name)?;
                Ok(LoadedDataset { manifest, store: Box::new(DiskStore::new(root.clone())) })
            }
        }
    }
}

pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub store: Box<dyn ImageStore>,
}

impl fmt::Debug for LoadedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadedDataset").field("records", &self.manifest.len()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub background: Variant,
    pub protocol: Protocol,
    pub train_dataset: DatasetSource,
    /// Evaluation dataset; only used by `cross_dataset`.
    pub test_dataset: Option<DatasetSource>,
    pub attack_code: Option<u8>,
    pub train_config: TrainConfig,
    /// Backbone, input size and initialization; heads follow the strategy.
    pub model: ModelConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bc,
            background: Variant::Full,
            protocol: Protocol::SameDataset,
            train_dataset: DatasetSource::default(),
            test_dataset: None,
            attack_code: None,
            train_config: TrainConfig::default(),
            model: ModelConfig::toy(64, Heads::BinaryOnly, 0),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Checks field consistency and data availability without training.
    pub fn validate(&self) -> Result<()> {
        let needs_code = matches!(self.protocol, Protocol::OneAttack | Protocol::UnseenAttack);
        match (needs_code, self.attack_code) {
            (true, None) => {
                return Err(PadError::Config(format!("protocol {} requires attack_code", self.protocol)));
            }
            (false, Some(_)) => {
                return Err(PadError::Config(format!("protocol {} takes no attack_code", self.protocol)));
            }
            (true, Some(c)) if !(1..=7).contains(&c) => {
                return Err(PadError::Config(format!("attack_code {c} outside 1..=7")));
            }
            _ => {}
        }
        match (&self.protocol, &self.test_dataset) {
            (Protocol::CrossDataset, None) => {
                return Err(PadError::Config("cross_dataset requires test_dataset".into()));
            }
            (Protocol::CrossDataset, Some(t)) if *t == self.train_dataset => {
                return Err(PadError::Config("cross_dataset requires test_dataset to differ from train_dataset".into()));
            }
            (Protocol::CrossDataset, _) => {}
            (_, Some(t)) if *t != self.train_dataset => {
                return Err(PadError::Config(format!("protocol {} evaluates on train_dataset only", self.protocol)));
            }
            _ => {}
        }
        self.effective_train_config().validate()?;
        self.model_config().validate()?;
        self.train_dataset.check(self.background)?;
        if let Some(t) = &self.test_dataset {
            t.check(self.background)?;
        }
        Ok(())
    }

    /// Training settings with the experiment's strategy, which takes
    /// precedence over `train_config.strategy`.
    pub fn effective_train_config(&self) -> TrainConfig {
        TrainConfig { strategy: self.strategy, ..self.train_config.clone() }
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn with_background(&self, background: Variant) -> Self {
        Self { background, ..self.clone() }
    }

    /// Model configuration with heads chosen by the strategy and the
    /// training seed as initialization seed.
    pub fn model_config(&self) -> ModelConfig {
        let heads = if self.strategy.is_multitask() { Heads::BinaryPlusMulticlass } else { Heads::BinaryOnly };
        ModelConfig { heads, init_seed: self.train_config.seed, ..self.model.clone() }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run_dir_for(self.protocol)
    }

    fn run_dir_for(&self, protocol: Protocol) -> PathBuf {
        self.output_dir
            .join(protocol.as_str())
            .join(self.strategy.as_str())
            .join(self.background.as_str())
            .join(self.train_config.seed.to_string())
    }

    /// Training and evaluation attack codes for the attack-filtering protocols.
    fn attack_filter(&self, present: &BTreeSet<u8>) -> Option<(BTreeSet<u8>, BTreeSet<u8>)> {
        let code = self.attack_code?;
        match self.protocol {
            Protocol::OneAttack => Some(([code].into(), [code].into())),
            Protocol::UnseenAttack => {
                let train = present.iter().copied().filter(|&c| c != 0 && c != code).collect();
                Some((train, [code].into()))
            }
            _ => None,
        }
    }
}

pub fn build_model(config: &ExperimentConfig) -> Result<AnyModel> {
    let base = config.model_config();
    if config.strategy.is_adversarial() {
        Ok(AnyModel::Uai(build_uai(&UaiConfig::for_base(base))?))
    } else {
        Ok(AnyModel::Classifier(build_classifier(&base)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub metrics: MetricsReport,
    pub loss_log: PathBuf,
    pub checkpoint: PathBuf,
    pub wall_time_secs: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Runs one experiment end to end.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_observed(config, None)
}

/// [`run_experiment`] with an observer on every training batch.
pub fn run_experiment_observed(
    config: &ExperimentConfig,
    observer: Option<&mut dyn BatchObserver>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), config)?;
    ::log::info!("running {} into {}", config.protocol, dir.display());

    let train_data = config.train_dataset.load(config.background)?;
    let cross = match (&config.test_dataset, config.protocol) {
        (Some(source), Protocol::CrossDataset) => Some(source.load(config.background)?),
        _ => None,
    };
    let train_manifest = match config.attack_filter(&train_data.manifest.attack_codes_present) {
        Some((train_codes, test_codes)) => filter_attacks(&train_data.manifest, &train_codes, &test_codes)?,
        None => train_data.manifest.clone(),
    };
    let (test_manifest, test_store): (&DatasetManifest, &dyn ImageStore) = match &cross {
        Some(test) => (&test.manifest, &*test.store),
        None => (&train_manifest, &*train_data.store),
    };

    let checkpoint_dir = dir.join("checkpoint");
    let loss_path = dir.join("losses.csv");
    let (model, log) = match reusable_checkpoint(config)? {
        Some((model, log)) => {
            ::log::info!("reusing the same-dataset checkpoint");
            (model, log)
        }
        None => train(build_model(config)?, &train_manifest, &*train_data.store, &config.effective_train_config(), observer)?,
    };
    model.save(&checkpoint_dir)?;
    log.save(&loss_path)?;

    let mode = config.strategy.scoring_mode();
    let scores = score_manifest(&model, test_manifest, test_store, Split::Test, mode)?;
    save_scores(&dir.join("scores.csv"), &scores)?;
    let metrics = MetricsReport::compute(&scores, DEFAULT_THRESHOLD, mode)?;
    metrics.write_json(&dir.join("metrics.json"))?;
    let result = ExperimentResult {
        config: config.clone(),
        metrics,
        loss_log: loss_path,
        checkpoint: checkpoint_dir,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("result.json"), &result)?;
    Ok(result)
}

/// The same-dataset model trained on identical data and settings, if one was saved.
fn reusable_checkpoint(config: &ExperimentConfig) -> Result<Option<(AnyModel, LossLog)>> {
    if config.protocol != Protocol::CrossDataset {
        return Ok(None);
    }
    let dir = config.run_dir_for(Protocol::SameDataset);
    let Ok(text) = std::fs::read_to_string(dir.join("config.json")) else {
        return Ok(None);
    };
    let Ok(previous) = serde_json::from_str::<ExperimentConfig>(&text) else {
        return Ok(None);
    };
    let same = previous.train_dataset == config.train_dataset
        && previous.effective_train_config() == config.effective_train_config()
        && previous.model == config.model
        && previous.strategy == config.strategy
        && previous.background == config.background;
    let checkpoint_dir = dir.join("checkpoint");
    if !same || !checkpoint_dir.join(checkpoint::SIDECAR_FILE).is_file() || !dir.join("losses.csv").is_file() {
        return Ok(None);
    }
    Ok(Some((checkpoint::load(&checkpoint_dir)?, LossLog::load(&dir.join("losses.csv"))?)))
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// "Yes" when the background was kept, "No" for face crops.
    pub background: String,
    pub apcer_pct: f64,
    pub bpcer_pct: f64,
    pub eer_pct: f64,
}

impl ComparisonRow {
    pub fn from_result(result: &ExperimentResult) -> Self {
        Self {
            method: result.config.strategy.display_name().to_string(),
            background: match result.config.background {
                Variant::Full => "Yes",
                Variant::Crop => "No",
            }
            .to_string(),
            apcer_pct: result.metrics.apcer * 100.0,
            bpcer_pct: result.metrics.bpcer * 100.0,
            eer_pct: result.metrics.eer * 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundComparison {
    pub full: ExperimentResult,
    pub crop: ExperimentResult,
}

impl BackgroundComparison {
    pub fn rows(&self) -> [ComparisonRow; 2] {
        [ComparisonRow::from_result(&self.crop), ComparisonRow::from_result(&self.full)]
    }
}

/// Runs `base` once on full frames and once on face crops, everything else equal.
pub fn run_background_comparison(base: &ExperimentConfig) -> Result<BackgroundComparison> {
    let full_config = base.with_background(Variant::Full);
    let crop_config = base.with_background(Variant::Crop);
    full_config.validate()?;
    crop_config.validate()?;
    Ok(BackgroundComparison { full: run_experiment(&full_config)?, crop: run_experiment(&crop_config)? })
}

/// Percentage with two decimals, e.g. `0.0024 -> "0.24"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// Text table of results; the lowest value of each error column is marked with `*`.
pub fn render_table(results: &[ExperimentResult]) -> String {
    let rows: Vec<ComparisonRow> = results.iter().map(ComparisonRow::from_result).collect();
    let columns: [fn(&ExperimentResult) -> f64; 3] = [|r| r.metrics.apcer, |r| r.metrics.bpcer, |r| r.metrics.eer];
    let best: Vec<f64> = columns
        .iter()
        .map(|f| results.iter().map(f).fold(f64::INFINITY, f64::min))
        .collect();
    let mut out = format!(
        "{:<10} {:<14} {:<10} {:>9} {:>9} {:>9}\n",
        "Method", "Protocol", "Background", "APCER", "BPCER", "EER"
    );
    for (r, row) in results.iter().zip(&rows) {
        let cells: Vec<String> = columns
            .iter()
            .zip(&best)
            .map(|(f, b)| {
                let v = f(r);
                let mark = if results.len() > 1 && v == *b { "*" } else { "" };
                format!("{}{mark}", format_percent(v))
            })
            .collect();
        out.push_str(&format!(
            "{:<10} {:<14} {:<10} {:>9} {:>9} {:>9}\n",
            row.method,
            r.config.protocol.as_str(),
            row.background,
            cells[0],
            cells[1],
            cells[2]
        ));
    }
    out
}

/// Writes `report.json` (all results) and `report.txt` (the table) into `dir`.
pub fn emit_report(results: &[ExperimentResult], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if results.is_empty() {
        return Err(PadError::Contract("no results to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    let text = dir.join("report.txt");
    write_json(&json, &results)?;
    std::fs::write(&text, render_table(results))?;
    Ok((json, text))
}

pub fn read_report(path: &Path) -> Result<Vec<ExperimentResult>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
