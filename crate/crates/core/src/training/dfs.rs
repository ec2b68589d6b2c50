//! Dynamic frame selection: per-video hardest-frame selection for training
//! and most-attack-like frame selection for scoring.

use crate::dataset::{images_to_tensor, AttackType, DatasetManifest, ImageStore, Label, Split};
use crate::error::{PadError, Result};
use crate::model::{AttackScorer, INFERENCE_CHUNK};

/// Frames of one video, ordered by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoGroup {
    pub video_id: String,
    pub subject_id: u32,
    pub label: Label,
    pub attack_type: AttackType,
    /// Record indices into the manifest.
    pub records: Vec<usize>,
    pub frame_indices: Vec<u32>,
}

impl VideoGroup {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Groups one split into videos, in order of first appearance.
pub fn group_videos(manifest: &DatasetManifest, split: Split) -> Result<Vec<VideoGroup>> {
    let mut groups: Vec<VideoGroup> = Vec::new();
    let mut position = std::collections::HashMap::new();
    for (i, r) in manifest.records.iter().enumerate().filter(|(_, r)| r.split == split) {
        let slot = *position.entry(r.video_id.clone()).or_insert_with(|| {
            groups.push(VideoGroup {
                video_id: r.video_id.clone(),
                subject_id: r.subject_id,
                label: r.label,
                attack_type: r.attack_type,
                records: Vec::new(),
                frame_indices: Vec::new(),
            });
            groups.len() - 1
        });
        let g = &mut groups[slot];
        if g.attack_type != r.attack_type {
            return Err(PadError::Manifest(format!("video {} mixes attack codes", r.video_id)));
        }
        g.records.push(i);
        g.frame_indices.push(r.frame_index);
    }
    for g in &mut groups {
        let mut pairs: Vec<(u32, usize)> = g.frame_indices.iter().copied().zip(g.records.iter().copied()).collect();
        pairs.sort_unstable();
        (g.frame_indices, g.records) = pairs.into_iter().unzip();
    }
    Ok(groups)
}

/// Positions of the `k` frames used for learning: the lowest attack
/// probabilities for attack videos, the highest for genuine videos. Ties go
/// to the earlier frame. Returned in ascending position order.
pub fn select_frames(probs: &[f32], label: Label, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    match label {
        Label::Attack => order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b))),
        Label::Genuine => order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b))),
    }
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Position of the highest attack probability, earliest on ties.
pub fn argmax_frame(probs: &[f32]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in probs.iter().enumerate() {
        if best.is_none_or(|b| *p > probs[b]) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| PadError::Contract("cannot select a frame from an empty video".into()))
}

/// Attack probabilities for a list of records, evaluated in chunks.
pub fn record_probs(
    model: &dyn AttackScorer,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    records: &[usize],
) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(INFERENCE_CHUNK) {
        let images = chunk
            .iter()
            .map(|&i| store.load(&manifest.records[i].path))
            .collect::<Result<Vec<_>>>()?;
        let tensor = images_to_tensor(&images, model.input_size(), model.normalization());
        out.extend(model.attack_probs(&tensor)?);
    }
    Ok(out)
}

/// Frame indices (video frame numbers) selected for learning.
pub fn dfs_select_frames(
    model: &dyn AttackScorer,
    video: &VideoGroup,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    k: usize,
) -> Result<Vec<u32>> {
    if video.len() < k {
        return Err(PadError::Contract(format!("video {} has {} frames, need {k}", video.video_id, video.len())));
    }
    let probs = record_probs(model, manifest, store, &video.records)?;
    Ok(select_frames(&probs, video.label, k).into_iter().map(|p| video.frame_indices[p]).collect())
}

/// The frame whose prediction stands for the whole video at test time.
/// Returns its frame index and attack probability.
pub fn dfs_test_select(
    model: &dyn AttackScorer,
    video: &VideoGroup,
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
) -> Result<(u32, f32)> {
    let probs = record_probs(model, manifest, store, &video.records)?;
    let best = argmax_frame(&probs)?;
    Ok((video.frame_indices[best], probs[best]))
}

/// Selection pass over all videos: record indices chosen for the learning
/// pass. Videos shorter than `k` frames are skipped.
pub fn selection_pass(
    model: &dyn AttackScorer,
    videos: &[VideoGroup],
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    k: usize,
) -> Result<Vec<usize>> {
    let mut selected = Vec::with_capacity(videos.len() * k);
    for v in videos.iter().filter(|v| v.len() >= k) {
        let probs = record_probs(model, manifest, store, &v.records)?;
        selected.extend(select_frames(&probs, v.label, k).into_iter().map(|p| v.records[p]));
    }
    Ok(selected)
}
