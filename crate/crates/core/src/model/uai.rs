//! Adversarial invariance assembly.
//!
//! The encoder splits the backbone features into a predictive embedding `e1`
//! and a nuisance embedding `e2` (both tanh-bounded). The classification heads
//! read `e1`; the decoder reconstructs the input from `(dropout(e1), e2)`. Two
//! disentanglers try to predict each embedding from the other: `f1: e2 -> e1'`
//! and `f2: e1 -> e2'`.
//!
//! Parameters form two disjoint groups. MAIN holds the encoder, heads and
//! decoder; ADVERSARY holds the disentanglers.

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{
    concat_outputs, Backbone, BlockCache, ClassHeads, ClassifierOutput, HeadsCache, ModelConfig,
    INFERENCE_CHUNK,
};
use super::nn::{
    dropout_mask, global_avg_pool, global_avg_pool_grad, relu, relu_grad, sigmoid, sigmoid_grad,
    tanh_grad, ConvGeometry, ConvTranspose2d, ConvTransposeCache, HasParams, Linear, LinearCache,
    Mlp, MlpCache, Param,
};
use crate::error::{PadError, Result};

const DECODER_CHANNELS: [usize; 3] = [16, 8, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UaiConfig {
    pub base: ModelConfig,
    pub dim_e1: usize,
    pub dim_e2: usize,
    pub dropout_rate: f32,
    pub decoder_output_size: usize,
    pub disentangler_hidden: usize,
}

impl Default for UaiConfig {
    fn default() -> Self {
        let base = ModelConfig::default();
        Self {
            decoder_output_size: base.input_size,
            base,
            dim_e1: 128,
            dim_e2: 64,
            dropout_rate: 0.5,
            disentangler_hidden: 64,
        }
    }
}

impl UaiConfig {
    pub fn for_base(base: ModelConfig) -> Self {
        Self { decoder_output_size: base.input_size, base, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.dim_e1 == 0 || self.dim_e2 == 0 || self.disentangler_hidden == 0 {
            return Err(PadError::Config("embedding dimensions must be positive".into()));
        }
        if !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return Err(PadError::Config(format!("dropout_rate {} outside (0, 1)", self.dropout_rate)));
        }
        if self.decoder_output_size != self.base.input_size {
            return Err(PadError::Config(format!(
                "decoder output {} must equal input size {}",
                self.decoder_output_size, self.base.input_size
            )));
        }
        if !self.base.input_size.is_multiple_of(8) {
            return Err(PadError::Config(format!(
                "input size {} must be a multiple of 8 for the decoder",
                self.base.input_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub project: Linear,
    pub upsample: Vec<ConvTranspose2d>,
    pub base_size: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    project: LinearCache,
    activations: Vec<Array4<f32>>,
    upsample: Vec<ConvTransposeCache>,
    output: Array4<f32>,
}

impl Decoder {
    fn new(inputs: usize, output_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let base_size = output_size / 8;
        let g = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
        let c0 = DECODER_CHANNELS[0];
        let project = Linear::new("decoder.project", inputs, c0 * base_size * base_size, rng);
        let mut upsample = Vec::new();
        let mut in_ch = c0;
        for (i, out_ch) in DECODER_CHANNELS[1..].iter().copied().chain([3]).enumerate() {
            upsample.push(ConvTranspose2d::new(&format!("decoder.up{}", i + 1), in_ch, out_ch, g, rng));
            in_ch = out_ch;
        }
        Self { project, upsample, base_size }
    }

    fn forward(&self, z: &Array2<f32>) -> (Array4<f32>, DecoderCache) {
        let n = z.nrows();
        let (h, project) = self.project.forward(z);
        let h = h
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, DECODER_CHANNELS[0], self.base_size, self.base_size))
            .expect("decoder projection shape");
        let mut activations = vec![relu(&h)];
        let mut caches = Vec::new();
        let last = self.upsample.len() - 1;
        let mut output = None;
        for (i, layer) in self.upsample.iter().enumerate() {
            let (y, cache) = layer.forward(activations.last().expect("input"));
            caches.push(cache);
            if i == last {
                output = Some(sigmoid(&y));
            } else {
                activations.push(relu(&y));
            }
        }
        let output = output.expect("at least one upsampling layer");
        (output.clone(), DecoderCache { project, activations, upsample: caches, output })
    }

    fn backward(&mut self, cache: &DecoderCache, d_out: &Array4<f32>) -> Array2<f32> {
        let mut g = sigmoid_grad(&cache.output, d_out);
        for i in (0..self.upsample.len()).rev() {
            g = self.upsample[i].backward(&cache.upsample[i], &g);
            g = relu_grad(&cache.activations[i], &g);
        }
        let n = g.dim().0;
        let flat = g.as_standard_layout().into_owned().into_shape_with_order((n, self.project.outputs())).expect("flatten");
        self.project.backward(&cache.project, &flat)
    }
}

impl HasParams for Decoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.project.params();
        v.extend(self.upsample.iter().flat_map(|u| u.params()));
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.project.params_mut();
        v.extend(self.upsample.iter_mut().flat_map(|u| u.params_mut()));
        v
    }
}

#[derive(Debug, Clone)]
pub struct UaiModel {
    pub config: UaiConfig,
    pub backbone: Backbone,
    pub to_e1: Linear,
    pub to_e2: Linear,
    pub heads: ClassHeads,
    pub decoder: Decoder,
    /// Disentangler reconstructing `e1` from `e2`.
    pub f1: Mlp,
    /// Disentangler reconstructing `e2` from `e1`.
    pub f2: Mlp,
}

#[derive(Debug, Clone)]
pub struct UaiOutputs {
    pub e1: Array2<f32>,
    pub e2: Array2<f32>,
    pub e1_prime: Array2<f32>,
    pub e2_prime: Array2<f32>,
    pub heads: ClassifierOutput,
    pub x_recon: Array4<f32>,
}

#[derive(Debug, Clone)]
pub struct Embeddings {
    pub e1: Array2<f32>,
    pub e2: Array2<f32>,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    backbone: Vec<BlockCache>,
    fmap_dims: (usize, usize, usize, usize),
    to_e1: LinearCache,
    to_e2: LinearCache,
}

#[derive(Debug, Clone)]
pub struct DisentanglerCache {
    f1: MlpCache,
    f2: MlpCache,
}

#[derive(Debug, Clone)]
pub struct UaiCache {
    encoder: EncoderCache,
    e1: Array2<f32>,
    e2: Array2<f32>,
    heads: HeadsCache,
    dropout: Array2<f32>,
    decoder: DecoderCache,
    disentangler: DisentanglerCache,
}

/// Gradients of the MAIN objective with respect to the assembly outputs.
#[derive(Debug, Clone)]
pub struct MainGrads {
    pub binary_logits: Array2<f32>,
    pub multiclass_logits: Option<Array2<f32>>,
    pub x_recon: Array4<f32>,
    pub e1: Array2<f32>,
    pub e2: Array2<f32>,
    pub e1_prime: Array2<f32>,
    pub e2_prime: Array2<f32>,
}

pub fn build_uai(config: &UaiConfig) -> Result<UaiModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.base.init_seed);
    let backbone = Backbone::toy_cnn("encoder", &mut rng);
    let feat = backbone.feature_dim();
    let to_e1 = Linear::new("encoder.e1", feat, config.dim_e1, &mut rng);
    let to_e2 = Linear::new("encoder.e2", feat, config.dim_e2, &mut rng);
    let heads = ClassHeads::new("predictor", config.dim_e1, &config.base, &mut rng);
    let decoder = Decoder::new(config.dim_e1 + config.dim_e2, config.decoder_output_size, &mut rng);
    let f1 = Mlp::new("disentangler.f1", config.dim_e2, config.disentangler_hidden, config.dim_e1, &mut rng);
    let f2 = Mlp::new("disentangler.f2", config.dim_e1, config.disentangler_hidden, config.dim_e2, &mut rng);
    Ok(UaiModel { config: config.clone(), backbone, to_e1, to_e2, heads, decoder, f1, f2 })
}

impl UaiModel {
    fn encode_cached(&self, x: &Array4<f32>) -> (Embeddings, EncoderCache) {
        let (fmap, backbone) = self.backbone.forward(x);
        let features = global_avg_pool(&fmap);
        let (z1, to_e1) = self.to_e1.forward(&features);
        let (z2, to_e2) = self.to_e2.forward(&features);
        (
            Embeddings { e1: z1.mapv(f32::tanh), e2: z2.mapv(f32::tanh) },
            EncoderCache { backbone, fmap_dims: fmap.dim(), to_e1, to_e2 },
        )
    }

    pub fn encode(&self, x: &Array4<f32>) -> Embeddings {
        self.encode_cached(x).0
    }

    /// Disentangler reconstructions `(e1', e2')`.
    pub fn disentangle(&self, emb: &Embeddings) -> (Array2<f32>, Array2<f32>, DisentanglerCache) {
        let (e1_prime, f1) = self.f1.forward(&emb.e2);
        let (e2_prime, f2) = self.f2.forward(&emb.e1);
        (e1_prime, e2_prime, DisentanglerCache { f1, f2 })
    }

    /// Full forward pass. Dropout on `e1` (decoder path only) is active iff `rng` is given.
    pub fn forward(&self, x: &Array4<f32>, rng: Option<&mut ChaCha8Rng>) -> (UaiOutputs, UaiCache) {
        let (emb, encoder) = self.encode_cached(x);
        let (heads_out, heads) = self.heads.forward(&emb.e1);
        let dropout = match rng {
            Some(rng) => dropout_mask(emb.e1.dim(), self.config.dropout_rate, rng),
            None => Array2::ones(emb.e1.dim()),
        };
        let noisy = &emb.e1 * &dropout;
        let z = ndarray::concatenate(Axis(1), &[noisy.view(), emb.e2.view()]).expect("same batch");
        let (x_recon, decoder) = self.decoder.forward(&z);
        let (e1_prime, e2_prime, disentangler) = self.disentangle(&emb);
        let outputs = UaiOutputs {
            e1: emb.e1.clone(),
            e2: emb.e2.clone(),
            e1_prime,
            e2_prime,
            heads: heads_out,
            x_recon,
        };
        let cache = UaiCache { encoder, e1: emb.e1, e2: emb.e2, heads, dropout, decoder, disentangler };
        (outputs, cache)
    }

    /// Evaluation-mode classification in fixed-size chunks.
    pub fn predict(&self, x: &Array4<f32>) -> ClassifierOutput {
        let n = x.dim().0;
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + INFERENCE_CHUNK).min(n);
            let chunk = x.slice_axis(Axis(0), (start..end).into()).to_owned();
            let emb = self.encode(&chunk);
            parts.push(self.heads.forward(&emb.e1).0);
            start = end;
        }
        concat_outputs(parts, self.config.base.n_attack_classes)
    }

    /// Backward of the MAIN objective. Gradients reach MAIN parameters only;
    /// the disentanglers merely relay gradients to their inputs.
    pub fn backward_main(&mut self, cache: &UaiCache, grads: &MainGrads) {
        let mut d_e1 = self.heads.backward(&cache.heads, &grads.binary_logits, grads.multiclass_logits.as_ref());
        d_e1 += &grads.e1;
        let mut d_e2 = grads.e2.clone();

        let d_z = self.decoder.backward(&cache.decoder, &grads.x_recon);
        let dim_e1 = self.config.dim_e1;
        let d_noisy = d_z.slice_axis(Axis(1), (0..dim_e1).into()).to_owned();
        d_e1 += &(&d_noisy * &cache.dropout);
        d_e2 += &d_z.slice_axis(Axis(1), (dim_e1..d_z.ncols()).into());

        d_e2 += &self.f1.input_grad(&cache.disentangler.f1, &grads.e1_prime);
        d_e1 += &self.f2.input_grad(&cache.disentangler.f2, &grads.e2_prime);

        let d_z1 = tanh_grad(&cache.e1, &d_e1);
        let d_z2 = tanh_grad(&cache.e2, &d_e2);
        let mut d_features = self.to_e1.backward(&cache.encoder.to_e1, &d_z1);
        d_features += &self.to_e2.backward(&cache.encoder.to_e2, &d_z2);
        let d_fmap = global_avg_pool_grad(&d_features, cache.encoder.fmap_dims);
        self.backbone.backward_blocks(0, &cache.encoder.backbone, &d_fmap);
    }

    /// Backward of the ADVERSARY objective into the disentanglers only.
    pub fn backward_adversary(&mut self, cache: &DisentanglerCache, d_e1_prime: &Array2<f32>, d_e2_prime: &Array2<f32>) {
        self.f1.backward(&cache.f1, d_e1_prime);
        self.f2.backward(&cache.f2, d_e2_prime);
    }

    pub fn main_params(&self) -> Vec<&Param> {
        let mut v = self.backbone.params();
        v.extend(self.to_e1.params());
        v.extend(self.to_e2.params());
        v.extend(self.heads.params());
        v.extend(self.decoder.params());
        v
    }

    pub fn main_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.backbone.params_mut();
        v.extend(self.to_e1.params_mut());
        v.extend(self.to_e2.params_mut());
        v.extend(self.heads.params_mut());
        v.extend(self.decoder.params_mut());
        v
    }

    pub fn adversary_params(&self) -> Vec<&Param> {
        let mut v = self.f1.params();
        v.extend(self.f2.params());
        v
    }

    pub fn adversary_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.f1.params_mut();
        v.extend(self.f2.params_mut());
        v
    }
}

impl HasParams for UaiModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.main_params();
        v.extend(self.adversary_params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.backbone.params_mut();
        v.extend(self.to_e1.params_mut());
        v.extend(self.to_e2.params_mut());
        v.extend(self.heads.params_mut());
        v.extend(self.decoder.params_mut());
        v.extend(self.f1.params_mut());
        v.extend(self.f2.params_mut());
        v
    }
}
