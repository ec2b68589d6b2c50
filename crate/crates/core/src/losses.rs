//! Loss terms for every training strategy.
//!
//! All losses are pure functions over `f64` batches. Rows are samples, and
//! every loss is averaged over the batch. The squared-error term sums over the
//! feature dimension before the batch average, so the reconstruction weight
//! does not depend on the batch size.
//!
//! Each loss has a matching `*_grad` function returning the analytic gradient
//! of the batch-mean loss with respect to its prediction inputs.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};

/// Probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]` before taking logs.
pub const PROB_EPSILON: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Derivative of the clamp: zero where the clamp is active.
fn clamp_slope(p: f64) -> f64 {
    if (PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p) {
        1.0
    } else {
        0.0
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(PadError::Contract(format!("{what}: length mismatch {a} vs {b}")));
    }
    if a == 0 {
        return Err(PadError::Contract(format!("{what}: empty batch")));
    }
    Ok(())
}

fn check_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(PadError::Contract(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.nrows() == 0 {
        return Err(PadError::Contract(format!("{what}: empty batch")));
    }
    Ok(())
}

/// Binary cross-entropy, `-(y ln p + (1 - y) ln(1 - p))`, averaged over the batch.
///
/// `p` is the probability of the positive (attack) class.
pub fn bce(y: &[f64], p: &[f64]) -> Result<f64> {
    check_len(y.len(), p.len(), "bce")?;
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&y, &p)| {
            let p = clamp_prob(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / y.len() as f64)
}

pub fn bce_grad(y: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_len(y.len(), p.len(), "bce")?;
    let n = y.len() as f64;
    Ok(y.iter()
        .zip(p)
        .map(|(&y, &p)| {
            let pc = clamp_prob(p);
            -(y / pc - (1.0 - y) / (1.0 - pc)) * clamp_slope(p) / n
        })
        .collect())
}

/// Categorical cross-entropy over `M` classes, `-sum_c y_c ln p_c`, averaged over rows.
pub fn ce(y: ArrayView2<f64>, p: ArrayView2<f64>) -> Result<f64> {
    check_shape(&y, &p, "ce")?;
    let n = y.nrows() as f64;
    let mut sum = 0.0;
    for (yr, pr) in y.rows().into_iter().zip(p.rows()) {
        let mut row = 0.0;
        for (&yc, &pc) in yr.iter().zip(pr.iter()) {
            row += yc * clamp_prob(pc).ln();
        }
        sum += -row;
    }
    Ok(sum / n)
}

pub fn ce_grad(y: ArrayView2<f64>, p: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_shape(&y, &p, "ce")?;
    let n = y.nrows() as f64;
    let mut g = Array2::zeros(p.dim());
    Zip::from(&mut g).and(&y).and(&p).for_each(|g, &yc, &pc| {
        *g = -yc / clamp_prob(pc) * clamp_slope(pc) / n;
    });
    Ok(g)
}

/// Multi-task loss: binary cross-entropy on the binary head plus categorical
/// cross-entropy on the attack-type head, unweighted.
pub fn loss_multi(
    y1: &[f64],
    p1: &[f64],
    y2: ArrayView2<f64>,
    p2: ArrayView2<f64>,
) -> Result<f64> {
    Ok(bce(y1, p1)? + ce(y2, p2)?)
}

/// Squared error summed over the feature dimension and averaged over rows.
pub fn mse(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    check_shape(&x, &y, "mse")?;
    let n = x.nrows() as f64;
    let mut sum = 0.0;
    Zip::from(&x).and(&y).for_each(|&a, &b| {
        let d = a - b;
        sum += d * d;
    });
    Ok(sum / n)
}

/// Gradient of [`mse`] with respect to `x`. The gradient with respect to `y` is its negation.
pub fn mse_grad(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_shape(&x, &y, "mse")?;
    let scale = 2.0 / x.nrows() as f64;
    Ok((&x - &y) * scale)
}

/// Adversarial invariance term, `-mse(e1, e1') - mse(e2, e2')`.
///
/// `e1_prime` is the disentangler's reconstruction of `e1` (from `e2`) and
/// `e2_prime` the reconstruction of `e2` (from `e1`). The main model minimizes
/// this value, which pushes both reconstruction errors up.
pub fn loss_adv(
    e1: ArrayView2<f64>,
    e2: ArrayView2<f64>,
    e1_prime: ArrayView2<f64>,
    e2_prime: ArrayView2<f64>,
) -> Result<f64> {
    Ok(-mse(e1, e1_prime)? - mse(e2, e2_prime)?)
}

#[derive(Debug, Clone)]
pub struct AdvGrads {
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
    pub e1_prime: Array2<f64>,
    pub e2_prime: Array2<f64>,
}

pub fn loss_adv_grad(
    e1: ArrayView2<f64>,
    e2: ArrayView2<f64>,
    e1_prime: ArrayView2<f64>,
    e2_prime: ArrayView2<f64>,
) -> Result<AdvGrads> {
    let g1 = mse_grad(e1, e1_prime)?;
    let g2 = mse_grad(e2, e2_prime)?;
    Ok(AdvGrads {
        e1_prime: g1.clone(),
        e1: -g1,
        e2_prime: g2.clone(),
        e2: -g2,
    })
}

/// Classification term of the adversarial binary strategy: `bce + alpha * mse(x, x')`.
pub fn loss_class_bc(
    y: &[f64],
    p: &[f64],
    x: ArrayView2<f64>,
    x_recon: ArrayView2<f64>,
    alpha: f64,
) -> Result<f64> {
    Ok(bce(y, p)? + alpha * mse(x, x_recon)?)
}

/// Classification term of the adversarial multi-task strategy: `loss_multi + alpha * mse(x, x')`.
#[allow(clippy::too_many_arguments)]
pub fn loss_class_mt(
    y1: &[f64],
    p1: &[f64],
    y2: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    x: ArrayView2<f64>,
    x_recon: ArrayView2<f64>,
    alpha: f64,
) -> Result<f64> {
    Ok(loss_multi(y1, p1, y2, p2)? + alpha * mse(x, x_recon)?)
}

/// Gradient of the reconstruction part of the classification losses with respect to `x'`.
pub fn recon_grad(
    x: ArrayView2<f64>,
    x_recon: ArrayView2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    Ok(mse_grad(x_recon, x)? * alpha)
}

/// Reconstruction weight schedule: starts at `alpha0` and grows by `step`
/// after every completed epoch, optionally clamped at `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub alpha0: f64,
    pub step: f64,
    #[serde(default)]
    pub cap: Option<f64>,
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        Self { alpha0: 0.025, step: 0.025, cap: None }
    }
}

impl AlphaSchedule {
    pub fn alpha_at(&self, epoch: usize) -> f64 {
        // fused multiply-add: one rounding, so alpha0 == step gives exactly step * (epoch + 1)
        let alpha = self.step.mul_add(epoch as f64, self.alpha0);
        match self.cap {
            Some(cap) => alpha.min(cap),
            None => alpha,
        }
    }
}

/// One-hot encode class indices into an `(n, classes)` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &c) in labels.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    #[allow(clippy::approx_constant)]
    fn bce_reference_values() {
        assert_abs_diff_eq!(bce(&[1.0], &[1.0]).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(bce(&[1.0], &[0.5]).unwrap(), 0.693147, epsilon = 1e-6);
        assert_abs_diff_eq!(bce(&[0.0], &[0.5]).unwrap(), 0.693147, epsilon = 1e-6);
    }

    #[test]
    fn bce_finite_at_extremes() {
        assert!(bce(&[1.0, 0.0], &[0.0, 1.0]).unwrap().is_finite());
        assert!(ce(array![[1.0, 0.0]].view(), array![[0.0, 1.0]].view()).unwrap().is_finite());
    }

    #[test]
    fn ce_reference_values() {
        let y = one_hot(&[3], 8);
        let uniform = Array2::from_elem((1, 8), 1.0 / 8.0);
        assert_abs_diff_eq!(ce(y.view(), uniform.view()).unwrap(), 2.079442, epsilon = 1e-6);
        let perfect = one_hot(&[3], 8);
        assert_abs_diff_eq!(ce(y.view(), perfect.view()).unwrap(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn ce_rejects_mismatched_lengths() {
        let y = one_hot(&[1], 3);
        let p = Array2::from_elem((1, 4), 0.25);
        assert!(matches!(ce(y.view(), p.view()), Err(PadError::Contract(_))));
    }

    #[test]
    fn multi_task_is_sum() {
        let y2 = one_hot(&[0], 8);
        let p2 = Array2::from_elem((1, 8), 1.0 / 8.0);
        let v = loss_multi(&[1.0], &[0.5], y2.view(), p2.view()).unwrap();
        assert_abs_diff_eq!(v, 2.772589, epsilon = 1e-6);
    }

    #[test]
    fn mse_sums_over_features() {
        let x = array![[1.0, 2.0]];
        let y = array![[0.0, 0.0]];
        assert_eq!(mse(x.view(), y.view()).unwrap(), 5.0);
        assert_eq!(mse(y.view(), x.view()).unwrap(), 5.0);
        assert_eq!(mse(x.view(), x.view()).unwrap(), 0.0);
        assert!(mse(x.view(), array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn adversarial_is_negated_sum() {
        let e1 = array![[1.0, 2.0]];
        let e1p = array![[0.0, 0.0]];
        let e2 = array![[1.0, 1.0, 1.0]];
        let e2p = array![[0.0, 0.0, 0.0]];
        assert_eq!(loss_adv(e1.view(), e2.view(), e1p.view(), e2p.view()).unwrap(), -8.0);
        assert_eq!(loss_adv(e1.view(), e2.view(), e1.view(), e2.view()).unwrap(), 0.0);
    }

    #[test]
    fn class_losses_compose() {
        let x = array![[1.0, 1.0]];
        let xr = array![[0.0, 0.0]];
        let v = loss_class_bc(&[1.0], &[0.5], x.view(), xr.view(), 0.025).unwrap();
        assert_abs_diff_eq!(v, 0.743147, epsilon = 1e-6);
        let v0 = loss_class_bc(&[1.0], &[0.5], x.view(), xr.view(), 0.0).unwrap();
        assert_eq!(v0, bce(&[1.0], &[0.5]).unwrap());

        let y2 = one_hot(&[0], 8);
        let p2 = Array2::from_elem((1, 8), 1.0 / 8.0);
        let x4 = array![[2.0]];
        let z = array![[0.0]];
        let v = loss_class_mt(&[1.0], &[0.5], y2.view(), p2.view(), x4.view(), z.view(), 0.05)
            .unwrap();
        assert_abs_diff_eq!(v, 2.972589, epsilon = 1e-6);
    }

    #[test]
    fn alpha_schedule() {
        let s = AlphaSchedule::default();
        assert_eq!(s.alpha_at(0), 0.025);
        assert_abs_diff_eq!(s.alpha_at(3), 0.1, epsilon = 1e-15);
        let capped = AlphaSchedule { cap: Some(0.5), ..s };
        assert_eq!(capped.alpha_at(100), 0.5);
        for e in 0..200 {
            assert!(s.alpha_at(e + 1) >= s.alpha_at(e));
        }
    }
}
