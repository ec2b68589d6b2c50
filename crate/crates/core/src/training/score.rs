use super::dfs::{argmax_frame, group_videos, record_probs};
use crate::dataset::{DatasetManifest, ImageStore, Split};
use crate::error::{PadError, Result};
use crate::metrics::{ScoreRecord, ScoringMode};
use crate::model::AttackScorer;

/// Scores one split: one record per frame, or one per video using the
/// most attack-like frame.
pub fn score_manifest(
    model: &dyn AttackScorer,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    split: Split,
    mode: ScoringMode,
) -> Result<Vec<ScoreRecord>> {
    let indices: Vec<usize> = (0..manifest.len()).filter(|&i| manifest.records[i].split == split).collect();
    if indices.is_empty() {
        return Err(PadError::Contract(format!("no {split} records to score")));
    }
    match mode {
        ScoringMode::PerFrame => {
            let probs = record_probs(model, manifest, store, &indices)?;
            Ok(indices
                .iter()
                .zip(probs)
                .map(|(&i, p)| {
                    let r = &manifest.records[i];
                    ScoreRecord {
                        id: r.path.clone(),
                        subject_id: r.subject_id,
                        attack_type: r.attack_type,
                        true_label: r.label,
                        attack_prob: f64::from(p),
                    }
                })
                .collect())
        }
        ScoringMode::PerVideoDfs => group_videos(manifest, split)?
            .iter()
            .map(|v| {
                let probs = record_probs(model, manifest, store, &v.records)?;
                let best = argmax_frame(&probs)?;
                Ok(ScoreRecord {
                    id: v.video_id.clone(),
                    subject_id: v.subject_id,
                    attack_type: v.attack_type,
                    true_label: v.label,
                    attack_prob: f64::from(probs[best]),
                })
            })
            .collect(),
    }
}
