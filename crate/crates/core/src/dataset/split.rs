use std::collections::BTreeSet;

use super::types::{DatasetManifest, DatasetName, Split};
use crate::error::{PadError, Result};

/// Subjects assigned to training in the ROSE-Youtu protocol.
pub const ROSE_YOUTU_TRAIN_SUBJECTS: [u32; 10] = [2, 3, 4, 5, 6, 7, 9, 10, 11, 12];

/// Subject ids shipped with ROSE-Youtu (ids 2..=23 with 8 and 14..23 testing).
pub const ROSE_YOUTU_SUBJECTS: std::ops::RangeInclusive<u32> = 2..=23;

/// Assigns the fixed ROSE-Youtu train/test split by subject.
pub fn rose_youtu_split(mut manifest: DatasetManifest) -> Result<DatasetManifest> {
    if manifest.name != DatasetName::RoseYoutu {
        return Err(PadError::Manifest(format!("rose_youtu split applied to {} manifest", manifest.name)));
    }
    for r in &mut manifest.records {
        if !ROSE_YOUTU_SUBJECTS.contains(&r.subject_id) {
            return Err(PadError::Manifest(format!("{}: unknown ROSE-Youtu subject {}", r.path, r.subject_id)));
        }
        r.split = if ROSE_YOUTU_TRAIN_SUBJECTS.contains(&r.subject_id) { Split::Train } else { Split::Test };
    }
    Ok(manifest)
}

/// Keeps genuine records plus `train_codes` attacks in the training split and
/// genuine plus `test_codes` attacks in the test split.
pub fn filter_attacks(
    manifest: &DatasetManifest,
    train_codes: &BTreeSet<u8>,
    test_codes: &BTreeSet<u8>,
) -> Result<DatasetManifest> {
    for c in train_codes.union(test_codes) {
        if *c == 0 {
            return Err(PadError::Protocol("code 0 is genuine and always kept; pass attack codes only".into()));
        }
        if !manifest.attack_codes_present.contains(c) {
            return Err(PadError::Protocol(format!("attack code {c} not present in {} manifest", manifest.name)));
        }
    }
    let records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| {
            let code = r.attack_type.code();
            let codes = match r.split {
                Split::Train => train_codes,
                Split::Test => test_codes,
            };
            code == 0 || codes.contains(&code)
        })
        .cloned()
        .collect();
    let filtered = DatasetManifest::new(manifest.name, records);
    for split in [Split::Train, Split::Test] {
        if filtered.split(split).next().is_none() {
            return Err(PadError::Protocol(format!("attack filtering left the {split} split empty")));
        }
    }
    Ok(filtered)
}
