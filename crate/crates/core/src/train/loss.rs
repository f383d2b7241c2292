use crate::dataio::{DataError, Mask};
use crate::network::SEG_REDUCTION;
use rand::Rng;

use crate::tensor::{gradcheck, sigmoid, Real, Tensor, TensorError};

use super::LossKind;

/// Target map at segmentation-output resolution: an output cell is positive
/// when any pixel of its 8×8 block is.
pub fn pixel_target<T: Real>(mask: &Mask) -> Result<Tensor<T>, DataError> {
    Ok(mask.reduce_max(SEG_REDUCTION)?.to_tensor())
}

/// Mean pixel loss over the map and its gradient w.r.t. the logits.
///
/// `Mse` compares raw outputs to 0/1 targets; `CrossEntropy` applies a
/// sigmoid to the logits first.
pub fn pixel_loss<T: Real>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    kind: LossKind,
) -> Result<(T, Tensor<T>), TensorError> {
    target.check_shape("pixel_loss", logits.shape())?;
    let n = T::of(logits.len() as f64);
    let mut loss = T::zero();
    let grad = Tensor::from_fn(logits.shape(), |i| {
        let (z, t) = (logits.data()[i], target.data()[i]);
        match kind {
            LossKind::Mse => {
                let d = z - t;
                loss += d * d;
                T::of(2.0) * d / n
            }
            LossKind::CrossEntropy => {
                // max(z, 0) − z·t + ln(1 + e^{−|z|})
                loss += z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
                (sigmoid(z) - t) / n
            }
        }
    });
    Ok((loss / n, grad))
}

/// Image-level sigmoid cross-entropy of one logit and its derivative.
pub fn decision_loss<T: Real>(logit: T, defective: bool) -> (T, T) {
    let t = if defective { T::one() } else { T::zero() };
    let loss = logit.max(T::zero()) - logit * t + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - t)
}

/// Finite-difference check of [`pixel_loss`] on a random `1×h×w` logit map
/// against a random 0/1 target; returns the relative gradient error.
pub fn check_pixel_loss(rng: &mut impl Rng, h: usize, w: usize, kind: LossKind) -> f64 {
    let z = gradcheck::random_tensor(rng, &[1, h, w]).map(|v| 2.0 * v);
    let t = Tensor::from_fn(&[1, h, w], |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let (_, analytic) = pixel_loss(&z, &t, kind).expect("shapes agree");
    let objective = |p: &[f64]| {
        pixel_loss(&Tensor::from_vec(&[1, h, w], p.to_vec()).unwrap(), &t, kind)
            .unwrap()
            .0
    };
    gradcheck::grad_check(objective, z.data(), analytic.data(), &[z.len()], gradcheck::DEFAULT_EPS)
}
