use image::imageops::FilterType;
use image::RgbImage;
use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::ImageStore;
use super::types::{DatasetManifest, SampleRecord, Split};
use crate::error::{PadError, Result};
use crate::model::Normalization;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// `None` keeps manifest order.
    pub shuffle_seed: Option<u64>,
    pub input_size: usize,
    pub normalization: Normalization,
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `(B, 3, input_size, input_size)`.
    pub images: Array4<f32>,
    /// 0 = genuine, 1 = attack.
    pub binary_labels: Vec<usize>,
    /// Attack code, which is also the multiclass index.
    pub attack_labels: Vec<usize>,
    /// Indices into `manifest.records`.
    pub indices: Vec<usize>,
}

/// Writes one image into slot `n` of a batch tensor, resizing as needed.
pub fn write_image(target: &mut Array4<f32>, n: usize, image: &RgbImage, normalization: Normalization) {
    let size = target.shape()[2];
    let resized;
    let image = if image.width() as usize != size || image.height() as usize != size {
        resized = image::imageops::resize(image, size as u32, size as u32, FilterType::Triangle);
        &resized
    } else {
        image
    };
    for (x, y, p) in image.enumerate_pixels() {
        for c in 0..3 {
            target[[n, c, y as usize, x as usize]] = normalization.apply(c, p[c] as f32 / 255.0);
        }
    }
}

/// Stacks images into a `(N, 3, size, size)` tensor.
pub fn images_to_tensor(images: &[RgbImage], size: usize, normalization: Normalization) -> Array4<f32> {
    let mut t = Array4::zeros((images.len(), 3, size, size));
    for (n, img) in images.iter().enumerate() {
        write_image(&mut t, n, img, normalization);
    }
    t
}

/// Loads the given records into a batch.
pub fn load_batch(
    manifest: &DatasetManifest,
    store: &dyn ImageStore,
    indices: &[usize],
    input_size: usize,
    normalization: Normalization,
) -> Result<Batch> {
    let mut images = Array4::zeros((indices.len(), 3, input_size, input_size));
    let mut binary_labels = Vec::with_capacity(indices.len());
    let mut attack_labels = Vec::with_capacity(indices.len());
    for (n, &i) in indices.iter().enumerate() {
        let r: &SampleRecord = &manifest.records[i];
        write_image(&mut images, n, &store.load(&r.path)?, normalization);
        binary_labels.push(r.label.index());
        attack_labels.push(r.attack_type.code() as usize);
    }
    Ok(Batch { images, binary_labels, attack_labels, indices: indices.to_vec() })
}

/// Record indices of `split` in the order visited during `epoch`.
pub fn epoch_order(manifest: &DatasetManifest, split: Split, shuffle_seed: Option<u64>, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..manifest.len()).filter(|&i| manifest.records[i].split == split).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        order.shuffle(&mut rng);
    }
    order
}

/// Lazily loads batches over a fixed visiting order.
pub struct BatchIter<'a> {
    manifest: &'a DatasetManifest,
    store: &'a dyn ImageStore,
    order: Vec<usize>,
    options: BatchOptions,
    position: usize,
}

impl<'a> BatchIter<'a> {
    pub fn from_indices(
        manifest: &'a DatasetManifest,
        store: &'a dyn ImageStore,
        order: Vec<usize>,
        options: BatchOptions,
    ) -> Result<Self> {
        if options.batch_size == 0 {
            return Err(PadError::Config("batch_size must be at least 1".into()));
        }
        Ok(Self { manifest, store, order, options, position: 0 })
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.options.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.options.batch_size).min(self.order.len());
        let indices = &self.order[self.position..end];
        self.position = end;
        Some(load_batch(self.manifest, self.store, indices, self.options.input_size, self.options.normalization))
    }
}

/// Batches over one split for one epoch; every record of the split is
/// visited exactly once.
pub fn iterate_batches<'a>(
    manifest: &'a DatasetManifest,
    store: &'a dyn ImageStore,
    split: Split,
    options: BatchOptions,
    epoch: usize,
) -> Result<BatchIter<'a>> {
    let order = epoch_order(manifest, split, options.shuffle_seed, epoch);
    BatchIter::from_indices(manifest, store, order, options)
}
