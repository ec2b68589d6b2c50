use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::dataset::Batch;
use crate::error::{PadError, Result};
use crate::losses::{self, one_hot};
use crate::model::nn::{to_f32, to_f64};
use crate::model::{AnyModel, Adam, AttackScorer, HasParams, MainGrads, PadModel, UaiModel};

/// Losses of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub main: f64,
    pub adversary: Option<f64>,
}

/// Owns a model and its optimizers and applies one strategy's updates.
///
/// Plain strategies update the classifier on the binary (and for multi-task
/// strategies the attack-type) cross-entropy. Adversarial strategies
/// alternate a MAIN step on the classification, reconstruction and
/// invariance terms with ADVERSARY steps on the disentangler reconstruction
/// error.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: AnyModel,
    pub config: TrainConfig,
    main_opt: Adam,
    adversary_opt: Adam,
    rng: ChaCha8Rng,
}

fn labels_f64(labels: &[usize]) -> Vec<f64> {
    labels.iter().map(|&l| l as f64).collect()
}

/// Gradient of the batch-mean cross-entropy with respect to softmax logits.
fn logit_grad(probs: &Array2<f32>, labels: &[usize]) -> Array2<f32> {
    let n = probs.nrows() as f32;
    let mut g = probs.clone();
    for (mut row, &l) in g.axis_iter_mut(Axis(0)).zip(labels) {
        row[l] -= 1.0;
    }
    g / n
}

fn flatten(x: &Array4<f32>) -> Array2<f64> {
    let n = x.dim().0;
    let features = x.len() / n.max(1);
    to_f64(&x.to_shape((n, features)).expect("contiguous tensor").to_owned())
}

impl Trainer {
    pub fn new(model: AnyModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let strategy = config.strategy;
        match (&model, strategy.is_adversarial()) {
            (AnyModel::Classifier(_), true) => {
                return Err(PadError::Config(format!("strategy {strategy} needs an adversarial (uai) model")));
            }
            (AnyModel::Uai(_), false) => {
                return Err(PadError::Config(format!("strategy {strategy} needs a plain classifier model")));
            }
            _ => {}
        }
        let has_multiclass = match &model {
            AnyModel::Classifier(m) => m.config.has_multiclass(),
            AnyModel::Uai(m) => m.config.base.has_multiclass(),
        };
        if strategy.is_multitask() && !has_multiclass {
            return Err(PadError::Config(format!("strategy {strategy} needs a model with the attack-type head")));
        }
        Ok(Self {
            main_opt: Adam::new(config.learning_rate),
            adversary_opt: Adam::new(config.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0xd1b5_4a32_d192_ed03),
            model,
            config,
        })
    }

    pub fn model(&self) -> &AnyModel {
        &self.model
    }

    pub fn into_model(self) -> AnyModel {
        self.model
    }

    pub fn attack_probs(&self, images: &Array4<f32>) -> Result<Vec<f32>> {
        self.model.attack_probs(images)
    }

    /// One MAIN step followed, for adversarial strategies, by the configured
    /// number of ADVERSARY steps.
    pub fn train_batch(&mut self, batch: &Batch, alpha: f64) -> Result<StepLosses> {
        let main = self.main_step(batch, alpha)?;
        let adversary = if self.config.strategy.is_adversarial() {
            let mut last = 0.0;
            for _ in 0..self.config.adversary_steps {
                last = self.adversary_step(batch)?;
            }
            Some(last)
        } else {
            None
        };
        Ok(StepLosses { main, adversary })
    }

    /// Updates the classifier or, for adversarial strategies, the MAIN group.
    /// Returns the objective value before the update.
    pub fn main_step(&mut self, batch: &Batch, alpha: f64) -> Result<f64> {
        let multitask = self.config.strategy.is_multitask();
        match &mut self.model {
            AnyModel::Classifier(model) => classifier_step(model, &mut self.main_opt, batch, multitask),
            AnyModel::Uai(model) => uai_main_step(model, &mut self.main_opt, &mut self.rng, batch, multitask, alpha),
        }
    }

    /// Updates the ADVERSARY group to reconstruct each embedding from the
    /// other. Returns the reconstruction error before the update.
    pub fn adversary_step(&mut self, batch: &Batch) -> Result<f64> {
        match &mut self.model {
            AnyModel::Uai(model) => uai_adversary_step(model, &mut self.adversary_opt, batch),
            AnyModel::Classifier(_) => Err(PadError::Contract("adversary step on a model without disentanglers".into())),
        }
    }
}

fn classification_loss(
    out: &crate::model::ClassifierOutput,
    batch: &Batch,
    multitask: bool,
) -> Result<(f64, Array2<f32>, Option<Array2<f32>>)> {
    let y = labels_f64(&batch.binary_labels);
    let p: Vec<f64> = out.attack_probs()?.into_iter().map(f64::from).collect();
    let d_binary = logit_grad(&out.binary, &batch.binary_labels);
    if !multitask {
        return Ok((losses::bce(&y, &p)?, d_binary, None));
    }
    let probs = out.multiclass.as_ref().ok_or_else(|| PadError::Contract("missing attack-type head".into()))?;
    let y2 = one_hot(&batch.attack_labels, probs.ncols());
    let loss = losses::loss_multi(&y, &p, y2.view(), to_f64(probs).view())?;
    Ok((loss, d_binary, Some(logit_grad(probs, &batch.attack_labels))))
}

fn classifier_step(model: &mut PadModel, opt: &mut Adam, batch: &Batch, multitask: bool) -> Result<f64> {
    let (out, cache) = model.forward(&batch.images);
    let (loss, d_binary, d_multi) = classification_loss(&out, batch, multitask)?;
    model.zero_grad();
    model.backward(&cache, &d_binary, d_multi.as_ref());
    opt.step(model.params_mut());
    Ok(loss)
}

fn uai_main_step(
    model: &mut UaiModel,
    opt: &mut Adam,
    rng: &mut ChaCha8Rng,
    batch: &Batch,
    multitask: bool,
    alpha: f64,
) -> Result<f64> {
    let (out, cache) = model.forward(&batch.images, Some(rng));
    let (class_loss, d_binary, d_multi) = classification_loss(&out.heads, batch, multitask)?;

    let x = flatten(&batch.images);
    let x_recon = flatten(&out.x_recon);
    let recon = losses::mse(x.view(), x_recon.view())?;
    let d_recon = to_f32(&losses::recon_grad(x.view(), x_recon.view(), alpha)?)
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order(out.x_recon.raw_dim())
        .expect("reconstruction shape");

    let (e1, e2) = (to_f64(&out.e1), to_f64(&out.e2));
    let (e1p, e2p) = (to_f64(&out.e1_prime), to_f64(&out.e2_prime));
    let adv = losses::loss_adv(e1.view(), e2.view(), e1p.view(), e2p.view())?;
    let adv_grads = losses::loss_adv_grad(e1.view(), e2.view(), e1p.view(), e2p.view())?;

    let grads = MainGrads {
        binary_logits: d_binary,
        multiclass_logits: d_multi,
        x_recon: d_recon,
        e1: to_f32(&adv_grads.e1),
        e2: to_f32(&adv_grads.e2),
        e1_prime: to_f32(&adv_grads.e1_prime),
        e2_prime: to_f32(&adv_grads.e2_prime),
    };
    for p in model.main_params_mut() {
        p.zero_grad();
    }
    model.backward_main(&cache, &grads);
    opt.step(model.main_params_mut());
    Ok(class_loss + alpha * recon + adv)
}

fn uai_adversary_step(model: &mut UaiModel, opt: &mut Adam, batch: &Batch) -> Result<f64> {
    let emb = model.encode(&batch.images);
    let (e1p, e2p, cache) = model.disentangle(&emb);
    let (e1, e2) = (to_f64(&emb.e1), to_f64(&emb.e2));
    let (e1p, e2p) = (to_f64(&e1p), to_f64(&e2p));
    let loss = losses::mse(e1.view(), e1p.view())? + losses::mse(e2.view(), e2p.view())?;
    let d1 = to_f32(&losses::mse_grad(e1p.view(), e1.view())?);
    let d2 = to_f32(&losses::mse_grad(e2p.view(), e2.view())?);
    for p in model.adversary_params_mut() {
        p.zero_grad();
    }
    model.backward_adversary(&cache, &d1, &d2);
    opt.step(model.adversary_params_mut());
    Ok(loss)
}
