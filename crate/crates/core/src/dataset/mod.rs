//! Manifests, frame extraction, face cropping, splits, batching and the
//! synthetic dataset generator.

mod batches;
pub mod face;
pub mod frames;
mod manifest;
pub mod prepare;
mod split;
pub mod synthetic;
mod types;

pub use batches::{
    epoch_order, images_to_tensor, iterate_batches, load_batch, write_image, Batch, BatchIter, BatchOptions,
};
pub use face::{crop_face, BoundingBox, CentralBoxDetector, Detection, FaceDetector, FixedDetector};
pub use frames::extract_frames;
pub use manifest::{
    load_manifest, read_manifest_csv, save_manifest, write_manifest_csv, DiskStore, ImageStore, MemoryStore,
    MANIFEST_HEADER,
};
pub use prepare::{prepare_dataset, PrepareOptions, PrepareSummary, VariantSelection};
pub use split::{filter_attacks, rose_youtu_split, ROSE_YOUTU_SUBJECTS, ROSE_YOUTU_TRAIN_SUBJECTS};
pub use synthetic::{generate_synthetic, CueInfo, SyntheticConfig, SyntheticDataset};
pub use types::{AttackFamily, AttackType, DatasetManifest, DatasetName, Label, SampleRecord, Split, Variant};
