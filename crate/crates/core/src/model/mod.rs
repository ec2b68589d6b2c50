//! Classifiers, the adversarial invariance assembly and the layers they are built from.

pub mod checkpoint;
mod classifier;
pub mod nn;
mod uai;

pub use checkpoint::AnyModel;
pub use classifier::{
    build_classifier, Backbone, BackboneKind, BlockCache, ClassHeads, ClassifierCache,
    ClassifierOutput, Heads, ModelConfig, Normalization, PadModel, INFERENCE_CHUNK,
};
pub use nn::{checksum, Adam, HasParams, Param};
pub use uai::{build_uai, DisentanglerCache, Embeddings, MainGrads, UaiCache, UaiConfig, UaiModel, UaiOutputs};

use ndarray::Array4;

use crate::error::Result;

/// Anything that scores images with a binary attack-vs-genuine head.
pub trait AttackScorer {
    fn classify(&self, images: &Array4<f32>) -> ClassifierOutput;

    fn input_size(&self) -> usize;

    fn normalization(&self) -> Normalization;

    /// Attack-class probability (binary head index 1) per image.
    fn attack_probs(&self, images: &Array4<f32>) -> Result<Vec<f32>> {
        self.classify(images).attack_probs()
    }
}

impl AttackScorer for PadModel {
    fn classify(&self, images: &Array4<f32>) -> ClassifierOutput {
        self.predict(images)
    }
    fn input_size(&self) -> usize {
        self.config.input_size
    }
    fn normalization(&self) -> Normalization {
        self.config.normalization()
    }
}

impl AttackScorer for UaiModel {
    fn classify(&self, images: &Array4<f32>) -> ClassifierOutput {
        self.predict(images)
    }
    fn input_size(&self) -> usize {
        self.config.base.input_size
    }
    fn normalization(&self) -> Normalization {
        self.config.base.normalization()
    }
}

impl AttackScorer for AnyModel {
    fn classify(&self, images: &Array4<f32>) -> ClassifierOutput {
        match self {
            AnyModel::Classifier(m) => m.predict(images),
            AnyModel::Uai(m) => m.predict(images),
        }
    }
    fn input_size(&self) -> usize {
        match self {
            AnyModel::Classifier(m) => m.input_size(),
            AnyModel::Uai(m) => m.input_size(),
        }
    }
    fn normalization(&self) -> Normalization {
        match self {
            AnyModel::Classifier(m) => m.normalization(),
            AnyModel::Uai(m) => m.normalization(),
        }
    }
}

/// Attack probability per image: the attack component of the binary softmax.
pub fn predict_attack_prob<M: AttackScorer + ?Sized>(model: &M, images: &Array4<f32>) -> Result<Vec<f32>> {
    model.attack_probs(images)
}
