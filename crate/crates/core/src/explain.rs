//! Grad-CAM++ heatmaps and overlays.
//!
//! For a chosen convolutional block output `A` (channels `k`, positions
//! `(i, j)`) and the gradient `g = dS/dA` of the target logit `S`, each
//! channel weight is
//!
//! ```text
//! alpha_kij = g_kij^2 / (2 g_kij^2 + sum_ab A_kab g_kij^3)
//! w_k       = sum_ij alpha_kij * relu(g_kij)
//! cam_ij    = relu(sum_k w_k A_kij)
//! ```
//!
//! which is the closed form obtained when the class score is the exponential
//! of the logit. The map is bilinearly upsampled to the model input size and
//! min-max normalized.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::{s, Array2, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::images_to_tensor;
use crate::error::{PadError, Result};
use crate::model::nn::{global_avg_pool, global_avg_pool_grad, tanh_grad};
use crate::model::{AnyModel, AttackScorer, Backbone, PadModel, UaiModel};

/// Which classification head the explained logit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadChoice {
    #[default]
    Binary,
    Multiclass,
}

/// Layer explained when none is named: the last convolutional block.
pub fn default_layer(backbone: &Backbone) -> String {
    backbone.layer_names().pop().unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// Normalized map at the model input resolution, values in `[0, 1]`.
    pub values: Array2<f32>,
    /// Upsampled map before normalization.
    pub raw: Array2<f32>,
    pub target_class: usize,
    pub source_layer: String,
    pub head: HeadChoice,
}

impl Heatmap {
    /// `(x, y)` of the largest value, first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f32::NEG_INFINITY;
        for ((y, x), &v) in self.values.indexed_iter() {
            if v > best_v {
                best_v = v;
                best = (x, y);
            }
        }
        best
    }
}

/// Models whose backbone feature maps can be explained.
pub trait GradCamTarget {
    fn backbone(&self) -> &Backbone;

    /// Gradient of one head logit with respect to the final feature map of a
    /// single image `(1, C, h, w)`.
    fn logit_grad(&self, fmap: &Array4<f32>, head: HeadChoice, class: usize) -> Result<Array4<f32>>;
}

fn one_hot_row(classes: usize, class: usize) -> Result<Array2<f32>> {
    if class >= classes {
        return Err(PadError::Contract(format!("target class {class} outside a {classes}-way head")));
    }
    let mut d = Array2::zeros((1, classes));
    d[[0, class]] = 1.0;
    Ok(d)
}

fn head_input_grad(
    heads: &crate::model::ClassHeads,
    features: &Array2<f32>,
    head: HeadChoice,
    class: usize,
) -> Result<Array2<f32>> {
    let (_, cache) = heads.forward(features);
    match head {
        HeadChoice::Binary => Ok(heads.input_grad(&cache, &one_hot_row(2, class)?)),
        HeadChoice::Multiclass => {
            let classes = heads.multiclass.as_ref().map(|h| h.outputs()).unwrap_or(0);
            let d = one_hot_row(classes, class)?;
            heads
                .multiclass_input_grad(&cache, &d)
                .ok_or_else(|| PadError::Contract("model has no attack-type head".into()))
        }
    }
}

impl GradCamTarget for PadModel {
    fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    fn logit_grad(&self, fmap: &Array4<f32>, head: HeadChoice, class: usize) -> Result<Array4<f32>> {
        let features = global_avg_pool(fmap);
        let d = head_input_grad(&self.heads, &features, head, class)?;
        Ok(global_avg_pool_grad(&d, fmap.dim()))
    }
}

impl GradCamTarget for UaiModel {
    fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    fn logit_grad(&self, fmap: &Array4<f32>, head: HeadChoice, class: usize) -> Result<Array4<f32>> {
        let features = global_avg_pool(fmap);
        let (z1, cache) = self.to_e1.forward(&features);
        let e1 = z1.mapv(f32::tanh);
        let d_e1 = head_input_grad(&self.heads, &e1, head, class)?;
        let d_features = self.to_e1.input_grad(&cache, &tanh_grad(&e1, &d_e1));
        Ok(global_avg_pool_grad(&d_features, fmap.dim()))
    }
}

impl GradCamTarget for AnyModel {
    fn backbone(&self) -> &Backbone {
        match self {
            AnyModel::Classifier(m) => &m.backbone,
            AnyModel::Uai(m) => &m.backbone,
        }
    }

    fn logit_grad(&self, fmap: &Array4<f32>, head: HeadChoice, class: usize) -> Result<Array4<f32>> {
        match self {
            AnyModel::Classifier(m) => m.logit_grad(fmap, head, class),
            AnyModel::Uai(m) => m.logit_grad(fmap, head, class),
        }
    }
}

/// Combines feature maps `(K, h, w)` and their gradients into the rectified
/// class activation grid `(h, w)`.
pub fn cam_from_gradients(activations: ArrayView3<f32>, grads: ArrayView3<f32>) -> Array2<f32> {
    let (k, h, w) = activations.dim();
    let mut cam = Array2::<f32>::zeros((h, w));
    for c in 0..k {
        let a = activations.index_axis(Axis(0), c);
        let g = grads.index_axis(Axis(0), c);
        let sum_a: f64 = a.iter().map(|&v| v as f64).sum();
        let mut weight = 0.0f64;
        for &gv in g.iter() {
            let g1 = gv as f64;
            let g2 = g1 * g1;
            let denom = 2.0 * g2 + sum_a * g2 * g1;
            let alpha = if denom != 0.0 { g2 / denom } else { 0.0 };
            weight += alpha * g1.max(0.0);
        }
        cam.scaled_add(weight as f32, &a);
    }
    cam.mapv_inplace(|v| v.max(0.0));
    cam
}

/// Raw activation grid of layer `layer_index` given its feature maps for
/// one image `(1, K, h, w)`. All-zero feature maps give an all-zero grid.
pub fn cam_from_features<M: GradCamTarget + ?Sized>(
    model: &M,
    features: &Array4<f32>,
    layer_index: usize,
    head: HeadChoice,
    target_class: usize,
) -> Result<Array2<f32>> {
    if features.dim().0 != 1 {
        return Err(PadError::Contract("explanations are computed one image at a time".into()));
    }
    let backbone = model.backbone();
    let end = backbone.blocks.len();
    let (fmap, caches) = backbone.forward_blocks(features, layer_index + 1, end);
    let d_fmap = model.logit_grad(&fmap, head, target_class)?;
    let grads = backbone.input_grad_blocks(layer_index + 1, &caches, &d_fmap);
    Ok(cam_from_gradients(features.slice(s![0, .., .., ..]), grads.slice(s![0, .., .., ..])))
}

/// Bilinear resize with half-pixel centers.
pub fn upsample_bilinear(grid: &Array2<f32>, height: usize, width: usize) -> Array2<f32> {
    let (h, w) = grid.dim();
    let coord = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f32) {
        let x = ((dst as f32 + 0.5) * src_len as f32 / dst_len as f32 - 0.5).max(0.0);
        let x0 = (x.floor() as usize).min(src_len - 1);
        let x1 = (x0 + 1).min(src_len - 1);
        (x0, x1, x - x0 as f32)
    };
    Array2::from_shape_fn((height, width), |(y, x)| {
        let (y0, y1, fy) = coord(y, h, height);
        let (x0, x1, fx) = coord(x, w, width);
        let top = grid[[y0, x0]] * (1.0 - fx) + grid[[y0, x1]] * fx;
        let bottom = grid[[y1, x0]] * (1.0 - fx) + grid[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Min-max normalization; constant maps become all zeros.
pub fn normalize(grid: &Array2<f32>) -> Array2<f32> {
    let min = grid.iter().copied().fold(f32::INFINITY, f32::min);
    let max = grid.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let range = max - min;
    if range.is_nan() || range <= 0.0 || range.is_infinite() {
        return Array2::zeros(grid.dim());
    }
    grid.mapv(|v| (v - min) / range)
}

/// Grad-CAM++ heatmap of `target_class` on the chosen head for one image.
pub fn gradcam_pp_head<M: GradCamTarget + AttackScorer + ?Sized>(
    model: &M,
    image: &RgbImage,
    target_class: usize,
    layer: &str,
    head: HeadChoice,
) -> Result<Heatmap> {
    let backbone = model.backbone();
    let layer_index = backbone.layer_index(layer)?;
    let size = model.input_size();
    let x = images_to_tensor(std::slice::from_ref(image), size, model.normalization());
    let (features, _) = backbone.forward_blocks(&x, 0, layer_index + 1);
    let grid = cam_from_features(model, &features, layer_index, head, target_class)?;
    let raw = upsample_bilinear(&grid, size, size);
    Ok(Heatmap { values: normalize(&raw), raw, target_class, source_layer: layer.to_string(), head })
}

/// Grad-CAM++ heatmap of `target_class` on the binary head.
pub fn gradcam_pp<M: GradCamTarget + AttackScorer + ?Sized>(
    model: &M,
    image: &RgbImage,
    target_class: usize,
    layer: &str,
) -> Result<Heatmap> {
    gradcam_pp_head(model, image, target_class, layer, HeadChoice::Binary)
}

/// Jet colormap for `v` in `[0, 1]`.
pub fn jet(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel = |offset: f32| (1.5 - (4.0 * v - offset).abs()).clamp(0.0, 1.0);
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// Blends the color-mapped heatmap onto `image`.
pub fn overlay(heatmap: &Heatmap, image: &RgbImage, opacity: f32) -> Result<RgbImage> {
    let (h, w) = heatmap.values.dim();
    if (image.width() as usize, image.height() as usize) != (w, h) {
        return Err(PadError::Contract(format!(
            "heatmap is {w}x{h} but image is {}x{}",
            image.width(),
            image.height()
        )));
    }
    if !(0.0..=1.0).contains(&opacity) {
        return Err(PadError::Contract(format!("opacity {opacity} outside [0, 1]")));
    }
    Ok(RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let color = jet(heatmap.values[[y as usize, x as usize]]);
        let p = image.get_pixel(x, y);
        Rgb(std::array::from_fn(|c| {
            let base = p[c] as f32;
            (base + (color[c] * 255.0 - base) * opacity).round().clamp(0.0, 255.0) as u8
        }))
    }))
}

/// Metadata written next to an overlay PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySidecar {
    pub target_class: usize,
    pub layer: String,
    pub head: HeadChoice,
    pub predicted_attack_prob: f64,
}

/// Writes the overlay PNG and a JSON sidecar with the same stem.
pub fn save_overlay(path: &Path, overlay_image: &RgbImage, heatmap: &Heatmap, predicted_attack_prob: f64) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    overlay_image.save(path)?;
    let sidecar = OverlaySidecar {
        target_class: heatmap.target_class,
        layer: heatmap.source_layer.clone(),
        head: heatmap.head,
        predicted_attack_prob,
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
