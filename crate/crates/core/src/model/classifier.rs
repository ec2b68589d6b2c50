use std::str::FromStr;

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{
    global_avg_pool, global_avg_pool_grad, max_pool2, max_pool2_grad, relu, relu_grad, softmax,
    Conv2d, ConvCache, ConvGeometry, HasParams, Linear, LinearCache, Param, PoolCache,
};
use crate::error::{PadError, Result};

/// Inference runs in chunks of this many images.
pub const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    PaperDefault,
    ToyCnn,
}

impl FromStr for BackboneKind {
    type Err = PadError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_default" => Ok(Self::PaperDefault),
            "toy_cnn" => Ok(Self::ToyCnn),
            other => Err(PadError::Config(format!("unknown backbone '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    BinaryOnly,
    BinaryPlusMulticlass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Pixel values scaled to [0, 1].
    UnitRange,
    /// ImageNet channel statistics.
    ImageNet,
}

impl Normalization {
    pub fn apply(self, channel: usize, value: f32) -> f32 {
        const MEAN: [f32; 3] = [0.485, 0.456, 0.406];
        const STD: [f32; 3] = [0.229, 0.224, 0.225];
        match self {
            Normalization::UnitRange => value,
            Normalization::ImageNet => (value - MEAN[channel]) / STD[channel],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub input_size: usize,
    pub pretrained: bool,
    pub heads: Heads,
    pub n_attack_classes: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::ToyCnn,
            input_size: 224,
            pretrained: false,
            heads: Heads::BinaryOnly,
            n_attack_classes: 8,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn toy(input_size: usize, heads: Heads, init_seed: u64) -> Self {
        Self { input_size, heads, init_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone == BackboneKind::PaperDefault {
            return Err(PadError::Unsupported(
                "the paper_default backbone (ImageNet-pretrained MobileNet v2) is not bundled; use toy_cnn".into(),
            ));
        }
        if self.pretrained {
            return Err(PadError::Config("pretrained weights are only defined for paper_default".into()));
        }
        if self.input_size < 8 {
            return Err(PadError::Config(format!("input_size {} is below 8", self.input_size)));
        }
        if self.heads == Heads::BinaryPlusMulticlass && self.n_attack_classes < 2 {
            return Err(PadError::Config("multiclass head needs at least 2 classes".into()));
        }
        Ok(())
    }

    pub fn normalization(&self) -> Normalization {
        if self.pretrained {
            Normalization::ImageNet
        } else {
            Normalization::UnitRange
        }
    }

    pub fn has_multiclass(&self) -> bool {
        self.heads == Heads::BinaryPlusMulticlass
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub pool: bool,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    conv: ConvCache,
    activation: Array4<f32>,
    pool: Option<PoolCache>,
}

impl ConvBlock {
    fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, BlockCache) {
        let (z, conv) = self.conv.forward(x);
        let activation = relu(&z);
        if self.pool {
            let (out, pool) = max_pool2(&activation);
            (out, BlockCache { conv, activation, pool: Some(pool) })
        } else {
            (activation.clone(), BlockCache { conv, activation, pool: None })
        }
    }

    fn pre_conv_grad(cache: &BlockCache, dy: &Array4<f32>) -> Array4<f32> {
        let da = match &cache.pool {
            Some(pool) => max_pool2_grad(pool, dy),
            None => dy.clone(),
        };
        relu_grad(&cache.activation, &da)
    }

    fn backward(&mut self, cache: &BlockCache, dy: &Array4<f32>) -> Array4<f32> {
        let dz = Self::pre_conv_grad(cache, dy);
        self.conv.backward(&cache.conv, &dz)
    }

    fn input_grad(&self, cache: &BlockCache, dy: &Array4<f32>) -> Array4<f32> {
        let dz = Self::pre_conv_grad(cache, dy);
        self.conv.input_grad(&cache.conv, &dz)
    }
}

/// Small convolutional trunk: three conv-ReLU blocks, the first two followed
/// by 2x2 max pooling. Global average pooling is applied by the callers.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub blocks: Vec<ConvBlock>,
}

pub const TOY_CHANNELS: [usize; 3] = [8, 16, 32];

impl Backbone {
    pub fn toy_cnn(prefix: &str, rng: &mut ChaCha8Rng) -> Self {
        let g = ConvGeometry { kernel: 3, stride: 1, padding: 1 };
        let mut blocks = Vec::new();
        let mut in_ch = 3;
        for (i, &out_ch) in TOY_CHANNELS.iter().enumerate() {
            blocks.push(ConvBlock {
                conv: Conv2d::new(&format!("{prefix}.conv{}", i + 1), in_ch, out_ch, g, rng),
                pool: i + 1 < TOY_CHANNELS.len(),
            });
            in_ch = out_ch;
        }
        Self { blocks }
    }

    pub fn feature_dim(&self) -> usize {
        self.blocks.last().map(|b| b.conv.out_channels).unwrap_or(0)
    }

    /// Names of the block outputs usable as explanation layers.
    pub fn layer_names(&self) -> Vec<String> {
        (1..=self.blocks.len()).map(|i| format!("conv{i}")).collect()
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layer_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PadError::Contract(format!("'{name}' is not a convolutional feature map")))
    }

    /// Runs blocks `start..end`.
    pub fn forward_blocks(&self, x: &Array4<f32>, start: usize, end: usize) -> (Array4<f32>, Vec<BlockCache>) {
        let mut caches = Vec::with_capacity(end - start);
        let mut h = x.clone();
        for block in &self.blocks[start..end] {
            let (out, cache) = block.forward(&h);
            caches.push(cache);
            h = out;
        }
        (h, caches)
    }

    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, Vec<BlockCache>) {
        self.forward_blocks(x, 0, self.blocks.len())
    }

    /// Backward through blocks `start..start + caches.len()`, accumulating parameter gradients.
    pub fn backward_blocks(&mut self, start: usize, caches: &[BlockCache], dy: &Array4<f32>) -> Array4<f32> {
        let mut g = dy.clone();
        for (i, cache) in caches.iter().enumerate().rev() {
            g = self.blocks[start + i].backward(cache, &g);
        }
        g
    }

    pub fn input_grad_blocks(&self, start: usize, caches: &[BlockCache], dy: &Array4<f32>) -> Array4<f32> {
        let mut g = dy.clone();
        for (i, cache) in caches.iter().enumerate().rev() {
            g = self.blocks[start + i].input_grad(cache, &g);
        }
        g
    }
}

impl HasParams for Backbone {
    fn params(&self) -> Vec<&Param> {
        self.blocks.iter().flat_map(|b| b.conv.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks.iter_mut().flat_map(|b| b.conv.params_mut()).collect()
    }
}

/// Softmax outputs of the classification heads.
#[derive(Debug, Clone)]
pub struct ClassifierOutput {
    pub binary_logits: Array2<f32>,
    pub binary: Array2<f32>,
    pub multiclass_logits: Option<Array2<f32>>,
    pub multiclass: Option<Array2<f32>>,
}

impl ClassifierOutput {
    /// Attack-class component (index 1) of the binary softmax.
    pub fn attack_probs(&self) -> Result<Vec<f32>> {
        if self.binary.ncols() != 2 {
            return Err(PadError::Contract("model has no two-way binary head".into()));
        }
        Ok(self.binary.column(1).to_vec())
    }
}

/// Classification heads shared by the plain classifier and the adversarial model.
#[derive(Debug, Clone)]
pub struct ClassHeads {
    pub binary: Linear,
    pub multiclass: Option<Linear>,
}

#[derive(Debug, Clone)]
pub struct HeadsCache {
    binary: LinearCache,
    multiclass: Option<LinearCache>,
}

impl ClassHeads {
    pub fn new(prefix: &str, inputs: usize, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            binary: Linear::new(&format!("{prefix}.binary"), inputs, 2, rng),
            multiclass: config
                .has_multiclass()
                .then(|| Linear::new(&format!("{prefix}.multiclass"), inputs, config.n_attack_classes, rng)),
        }
    }

    pub fn forward(&self, features: &Array2<f32>) -> (ClassifierOutput, HeadsCache) {
        let (binary_logits, binary) = self.binary.forward(features);
        let mc = self.multiclass.as_ref().map(|h| h.forward(features));
        let (multiclass_logits, multiclass_cache) = match mc {
            Some((l, c)) => (Some(l), Some(c)),
            None => (None, None),
        };
        let out = ClassifierOutput {
            binary: softmax(&binary_logits),
            multiclass: multiclass_logits.as_ref().map(softmax),
            binary_logits,
            multiclass_logits,
        };
        (out, HeadsCache { binary, multiclass: multiclass_cache })
    }

    /// Backward from logit gradients; returns the gradient on the shared features.
    pub fn backward(
        &mut self,
        cache: &HeadsCache,
        d_binary: &Array2<f32>,
        d_multiclass: Option<&Array2<f32>>,
    ) -> Array2<f32> {
        let mut d = self.binary.backward(&cache.binary, d_binary);
        if let (Some(head), Some(c), Some(g)) = (self.multiclass.as_mut(), cache.multiclass.as_ref(), d_multiclass) {
            d += &head.backward(c, g);
        }
        d
    }

    pub fn input_grad(&self, cache: &HeadsCache, d_binary: &Array2<f32>) -> Array2<f32> {
        self.binary.input_grad(&cache.binary, d_binary)
    }

    pub fn multiclass_input_grad(&self, cache: &HeadsCache, d: &Array2<f32>) -> Option<Array2<f32>> {
        match (&self.multiclass, &cache.multiclass) {
            (Some(h), Some(c)) => Some(h.input_grad(c, d)),
            _ => None,
        }
    }
}

impl HasParams for ClassHeads {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.binary.params();
        if let Some(h) = &self.multiclass {
            v.extend(h.params());
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.binary.params_mut();
        if let Some(h) = &mut self.multiclass {
            v.extend(h.params_mut());
        }
        v
    }
}

/// Backbone followed by a binary softmax head and an optional attack-type head.
#[derive(Debug, Clone)]
pub struct PadModel {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub heads: ClassHeads,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    backbone: Vec<BlockCache>,
    fmap_dims: (usize, usize, usize, usize),
    heads: HeadsCache,
}

/// Builds the classifier described by `config`, initialized from `config.init_seed`.
pub fn build_classifier(config: &ModelConfig) -> Result<PadModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let backbone = Backbone::toy_cnn("backbone", &mut rng);
    let heads = ClassHeads::new("head", backbone.feature_dim(), config, &mut rng);
    Ok(PadModel { config: config.clone(), backbone, heads })
}

impl PadModel {
    pub fn forward(&self, x: &Array4<f32>) -> (ClassifierOutput, ClassifierCache) {
        let (fmap, backbone) = self.backbone.forward(x);
        let features = global_avg_pool(&fmap);
        let (out, heads) = self.heads.forward(&features);
        (out, ClassifierCache { backbone, fmap_dims: fmap.dim(), heads })
    }

    /// Evaluation-mode forward in fixed-size chunks.
    pub fn predict(&self, x: &Array4<f32>) -> ClassifierOutput {
        let n = x.dim().0;
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + INFERENCE_CHUNK).min(n);
            let chunk = x.slice_axis(Axis(0), (start..end).into()).to_owned();
            parts.push(self.forward(&chunk).0);
            start = end;
        }
        concat_outputs(parts, self.config.n_attack_classes)
    }

    /// Backward from logit gradients, accumulating parameter gradients.
    pub fn backward(
        &mut self,
        cache: &ClassifierCache,
        d_binary_logits: &Array2<f32>,
        d_multiclass_logits: Option<&Array2<f32>>,
    ) {
        let d_features = self.heads.backward(&cache.heads, d_binary_logits, d_multiclass_logits);
        let d_fmap = global_avg_pool_grad(&d_features, cache.fmap_dims);
        self.backbone.backward_blocks(0, &cache.backbone, &d_fmap);
    }
}

pub(crate) fn concat_outputs(parts: Vec<ClassifierOutput>, classes: usize) -> ClassifierOutput {
    let cat = |arrays: Vec<Array2<f32>>, cols: usize| -> Array2<f32> {
        if arrays.is_empty() {
            return Array2::zeros((0, cols));
        }
        let views: Vec<_> = arrays.iter().map(|a| a.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("matching widths")
    };
    let has_mc = parts.first().is_some_and(|p| p.multiclass.is_some());
    let mut bl = Vec::new();
    let mut b = Vec::new();
    let mut ml = Vec::new();
    let mut m = Vec::new();
    for p in parts {
        bl.push(p.binary_logits);
        b.push(p.binary);
        if let (Some(l), Some(pr)) = (p.multiclass_logits, p.multiclass) {
            ml.push(l);
            m.push(pr);
        }
    }
    ClassifierOutput {
        binary_logits: cat(bl, 2),
        binary: cat(b, 2),
        multiclass_logits: has_mc.then(|| cat(ml, classes)),
        multiclass: has_mc.then(|| cat(m, classes)),
    }
}

impl HasParams for PadModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.backbone.params();
        v.extend(self.heads.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.backbone.params_mut();
        v.extend(self.heads.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(n: usize, size: usize, seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_simple_fn((n, 3, size, size), || rng.random::<f32>())
    }

    #[test]
    fn binary_head_shape_and_normalization() {
        let model = build_classifier(&ModelConfig::toy(32, Heads::BinaryOnly, 1)).unwrap();
        let out = model.predict(&random_batch(4, 32, 2));
        assert_eq!(out.binary.dim(), (4, 2));
        assert!(out.multiclass.is_none());
        for row in out.binary.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn multitask_heads_are_two_and_eight_way() {
        let model = build_classifier(&ModelConfig::toy(32, Heads::BinaryPlusMulticlass, 1)).unwrap();
        let out = model.predict(&random_batch(3, 32, 2));
        assert_eq!(out.binary.dim(), (3, 2));
        assert_eq!(out.multiclass.as_ref().unwrap().dim(), (3, 8));
    }

    #[test]
    fn unknown_backbone_is_config_error() {
        assert!(matches!("resnet".parse::<BackboneKind>(), Err(PadError::Config(_))));
        let cfg = ModelConfig { backbone: BackboneKind::PaperDefault, ..ModelConfig::default() };
        assert!(build_classifier(&cfg).is_err());
    }

    #[test]
    fn forward_is_deterministic_and_seeded() {
        let a = build_classifier(&ModelConfig::toy(16, Heads::BinaryOnly, 5)).unwrap();
        let b = build_classifier(&ModelConfig::toy(16, Heads::BinaryOnly, 5)).unwrap();
        let c = build_classifier(&ModelConfig::toy(16, Heads::BinaryOnly, 6)).unwrap();
        let x = random_batch(2, 16, 3);
        assert_eq!(a.predict(&x).binary, a.predict(&x).binary);
        assert_eq!(a.predict(&x).binary, b.predict(&x).binary);
        assert_ne!(a.predict(&x).binary, c.predict(&x).binary);
    }

    #[test]
    fn chunked_prediction_matches_single_pass() {
        let model = build_classifier(&ModelConfig::toy(16, Heads::BinaryPlusMulticlass, 2)).unwrap();
        let x = random_batch(INFERENCE_CHUNK + 5, 16, 4);
        let whole = model.forward(&x).0;
        let chunked = model.predict(&x);
        for (a, b) in whole.binary.iter().zip(chunked.binary.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
