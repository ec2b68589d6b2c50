//! Training drivers for the seven strategies, dynamic frame selection and
//! test-split scoring.

mod config;
pub mod dfs;
mod log;
mod score;
mod trainer;

pub use config::{Strategy, TrainConfig};
pub use dfs::{dfs_select_frames, dfs_test_select, group_videos, select_frames, VideoGroup};
pub use self::log::{LossEntry, LossLog};
pub use score::score_manifest;
pub use trainer::{StepLosses, Trainer};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use self::log::MeanAccumulator;
use crate::dataset::{epoch_order, Batch, BatchIter, BatchOptions, DatasetManifest, ImageStore, Split};
use crate::error::{PadError, Result};
use crate::metrics::ScoringMode;
use crate::model::{AnyModel, AttackScorer, PadModel, UaiModel};

/// Sees every training batch before it is used.
pub trait BatchObserver {
    fn observe(&mut self, epoch: usize, batch: &Batch);
}

/// Records the attack codes of every training batch.
#[derive(Debug, Clone, Default)]
pub struct RecordingObserver {
    pub batches: Vec<(usize, Vec<usize>)>,
}

impl BatchObserver for RecordingObserver {
    fn observe(&mut self, epoch: usize, batch: &Batch) {
        self.batches.push((epoch, batch.attack_labels.clone()));
    }
}

impl Strategy {
    /// How test scores are aggregated for this strategy.
    pub fn scoring_mode(self) -> ScoringMode {
        if self.is_dfs() {
            ScoringMode::PerVideoDfs
        } else {
            ScoringMode::PerFrame
        }
    }
}

fn batch_options(model: &AnyModel, config: &TrainConfig) -> BatchOptions {
    BatchOptions {
        batch_size: config.batch_size,
        shuffle_seed: Some(config.seed),
        input_size: model.input_size(),
        normalization: model.normalization(),
    }
}

fn run_epoch(
    trainer: &mut Trainer,
    batches: BatchIter<'_>,
    epoch: usize,
    log: &mut LossLog,
    observer: &mut Option<&mut dyn BatchObserver>,
) -> Result<()> {
    let alpha = trainer.config.alpha_schedule.alpha_at(epoch);
    let (mut main, mut adversary) = (MeanAccumulator::default(), MeanAccumulator::default());
    for batch in batches {
        let batch = batch?;
        if let Some(o) = observer.as_deref_mut() {
            o.observe(epoch, &batch);
        }
        let losses = trainer.train_batch(&batch, alpha)?;
        main.add(losses.main, batch.indices.len());
        if let Some(a) = losses.adversary {
            adversary.add(a, batch.indices.len());
        }
    }
    if trainer.config.strategy.is_adversarial() {
        log.push(epoch, "main", main.mean());
        log.push(epoch, "adversary", adversary.mean());
        ::log::info!("epoch {epoch}: main {:.5} adversary {:.5}", main.mean(), adversary.mean());
    } else {
        log.push(epoch, "train", main.mean());
        ::log::info!("epoch {epoch}: loss {:.5}", main.mean());
    }
    Ok(())
}

/// Trains `model` with `config.strategy` on the training split of `manifest`.
///
/// Frame-selection strategies re-select their training frames every epoch;
/// the others iterate over every training frame in a seeded shuffled order.
pub fn train(
    model: AnyModel,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    config: &TrainConfig,
    mut observer: Option<&mut dyn BatchObserver>,
) -> Result<(AnyModel, LossLog)> {
    let mut trainer = Trainer::new(model, config.clone())?;
    if manifest.split(Split::Train).next().is_none() {
        return Err(PadError::Contract("training split is empty".into()));
    }
    let options = batch_options(&trainer.model, config);
    let videos = if config.strategy.is_dfs() {
        let videos = group_videos(manifest, Split::Train)?;
        for v in videos.iter().filter(|v| v.len() < config.dfs_frames_per_video) {
            ::log::warn!("skipping video {} with {} frames in frame selection", v.video_id, v.len());
        }
        videos
    } else {
        Vec::new()
    };
    let mut log = LossLog::default();
    for epoch in 0..config.epochs {
        let order = if config.strategy.is_dfs() {
            let mut selected =
                dfs::selection_pass(&trainer.model, &videos, manifest, store, config.dfs_frames_per_video)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
            selected.shuffle(&mut rng);
            selected
        } else {
            epoch_order(manifest, Split::Train, options.shuffle_seed, epoch)
        };
        if order.is_empty() {
            return Err(PadError::Contract("no usable training frames".into()));
        }
        let batches = BatchIter::from_indices(manifest, store, order, options)?;
        run_epoch(&mut trainer, batches, epoch, &mut log, &mut observer)?;
    }
    Ok((trainer.into_model(), log))
}

/// Trains a plain classifier with `bc` or `mt`.
pub fn train_classifier(
    model: PadModel,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    config: &TrainConfig,
) -> Result<(PadModel, LossLog)> {
    if config.strategy.is_adversarial() || config.strategy.is_dfs() {
        return Err(PadError::Config(format!("train_classifier does not run strategy {}", config.strategy)));
    }
    match train(AnyModel::Classifier(model), manifest, store, config, None)? {
        (AnyModel::Classifier(m), log) => Ok((m, log)),
        _ => unreachable!("trainer keeps the model kind"),
    }
}

/// Trains the adversarial assembly with `adv_bc` or `adv_mt`.
pub fn train_adversarial(
    model: UaiModel,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    config: &TrainConfig,
) -> Result<(UaiModel, LossLog)> {
    if !config.strategy.is_adversarial() || config.strategy.is_dfs() {
        return Err(PadError::Config(format!("train_adversarial does not run strategy {}", config.strategy)));
    }
    match train(AnyModel::Uai(model), manifest, store, config, None)? {
        (AnyModel::Uai(m), log) => Ok((m, log)),
        _ => unreachable!("trainer keeps the model kind"),
    }
}

/// Trains with `dfs`, `mt_dfs` or `adv_dfs`.
pub fn dfs_train(
    model: AnyModel,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    config: &TrainConfig,
) -> Result<(AnyModel, LossLog)> {
    if !config.strategy.is_dfs() {
        return Err(PadError::Config(format!("dfs_train does not run strategy {}", config.strategy)));
    }
    train(model, manifest, store, config, None)
}
