//! Per-channel feature normalization over the spatial extent of one image.
//!
//! Training runs with a batch of one, so "batch" statistics are the spatial
//! mean and (biased) variance of each channel. Inference uses running
//! averages accumulated with momentum [`MOMENTUM`].

use super::{Real, Result, Tensor, TensorError};

pub const EPSILON: f64 = 1e-5;
pub const MOMENTUM: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Infer,
}

/// Learnable affine parameters and running statistics for one normalized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormState<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> NormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Fold the statistics of one training forward pass into the running averages.
    pub fn update_running(&mut self, cache: &NormCache<T>) {
        let m = T::of(MOMENTUM);
        let one_m = T::one() - m;
        for c in 0..self.channels() {
            self.running_mean[c] = m * self.running_mean[c] + one_m * cache.mean[c];
            self.running_var[c] = m * self.running_var[c] + one_m * cache.var[c];
        }
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub mode: NormMode,
    pub normalized: Tensor<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct NormGrad<T> {
    pub d_gamma: Vec<T>,
    pub d_beta: Vec<T>,
    pub d_input: Tensor<T>,
}

/// Normalize each channel, then scale by `gamma` and shift by `beta`.
///
/// Does not touch the running statistics; call [`NormState::update_running`]
/// with the returned cache after a training step.
pub fn feature_norm<T: Real>(
    input: &Tensor<T>,
    mode: NormMode,
    state: &NormState<T>,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let (c, h, w) = input.dims3("feature_norm")?;
    if c != state.channels() {
        return Err(TensorError::ShapeMismatch {
            op: "feature_norm",
            expected: vec![state.channels(), h, w],
            got: input.shape().to_vec(),
        });
    }
    let n = T::of((h * w) as f64);
    let eps = T::of(EPSILON);
    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    let mut mean = Vec::with_capacity(c);
    let mut var = Vec::with_capacity(c);
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let x = input.channel(ch);
        let (mu, sigma2) = match mode {
            NormMode::Train => {
                let mu = x.iter().copied().sum::<T>() / n;
                let s2 = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
                (mu, s2)
            }
            NormMode::Infer => (state.running_mean[ch], state.running_var[ch]),
        };
        let inv = T::one() / (sigma2 + eps).sqrt();
        let (g, b) = (state.gamma[ch], state.beta[ch]);
        for ((xh, o), &v) in normalized
            .channel_mut(ch)
            .iter_mut()
            .zip(out.channel_mut(ch).iter_mut())
            .zip(x)
        {
            *xh = (v - mu) * inv;
            *o = g * *xh + b;
        }
        mean.push(mu);
        var.push(sigma2);
        inv_std.push(inv);
    }
    Ok((
        out,
        NormCache {
            mode,
            normalized,
            mean,
            var,
            inv_std,
        },
    ))
}

pub fn feature_norm_backward<T: Real>(
    cache: &NormCache<T>,
    state: &NormState<T>,
    upstream: &Tensor<T>,
) -> Result<NormGrad<T>> {
    upstream.check_shape("feature_norm_backward", cache.normalized.shape())?;
    let (c, h, w) = upstream.dims3("feature_norm_backward")?;
    let n = T::of((h * w) as f64);
    let mut d_gamma = Vec::with_capacity(c);
    let mut d_beta = Vec::with_capacity(c);
    let mut d_input = Tensor::zeros(upstream.shape());
    for ch in 0..c {
        let dy = upstream.channel(ch);
        let xh = cache.normalized.channel(ch);
        let sum_dy: T = dy.iter().copied().sum();
        let sum_dy_xh: T = dy.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        d_gamma.push(sum_dy_xh);
        d_beta.push(sum_dy);
        let g = state.gamma[ch];
        let inv = cache.inv_std[ch];
        let dx = d_input.channel_mut(ch);
        match cache.mode {
            NormMode::Train => {
                // dx = γ·inv/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
                let scale = g * inv / n;
                for ((d, &gy), &x) in dx.iter_mut().zip(dy).zip(xh) {
                    *d = scale * (n * gy - sum_dy - x * sum_dy_xh);
                }
            }
            NormMode::Infer => {
                let scale = g * inv;
                for (d, &gy) in dx.iter_mut().zip(dy) {
                    *d = scale * gy;
                }
            }
        }
    }
    Ok(NormGrad {
        d_gamma,
        d_beta,
        d_input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{random_tensor, test_rng};

    #[test]
    fn constant_channel_maps_to_zero() {
        let t = Tensor::<f64>::full(&[1, 3, 3], 4.2);
        let (out, _) = feature_norm(&t, NormMode::Train, &NormState::new(1)).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_variance_channel_is_nearly_unchanged() {
        let t = Tensor::<f64>::from_vec(&[1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let (out, _) = feature_norm(&t, NormMode::Train, &NormState::new(1)).unwrap();
        let expect = 1.0 / (1.0f64 + EPSILON).sqrt();
        assert!((out.data()[0] + expect).abs() < 1e-15);
        assert!((out.data()[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn random_channel_moments() {
        let mut rng = test_rng(21);
        let t = random_tensor(&mut rng, &[3, 9, 7]).map(|v| 3.0 * v + 5.0);
        let (out, _) = feature_norm(&t, NormMode::Train, &NormState::new(3)).unwrap();
        for c in 0..3 {
            let ch = out.channel(c);
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ch.len() as f64;
            assert!(mean.abs() < 1e-10, "{mean}");
            assert!((var - 1.0).abs() < 1e-4, "{var}");
        }
    }

    #[test]
    fn running_stats_follow_momentum_and_drive_inference() {
        let t = Tensor::<f64>::from_vec(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        let mut st = NormState::new(1);
        let (_, cache) = feature_norm(&t, NormMode::Train, &st).unwrap();
        st.update_running(&cache);
        assert!((st.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((st.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
        st.running_mean[0] = 2.0;
        st.running_var[0] = 4.0 - EPSILON;
        let (out, _) = feature_norm(&t, NormMode::Infer, &st).unwrap();
        assert!((out.data()[0] + 0.5).abs() < 1e-12);
        assert!((out.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn affine_applied() {
        let t = Tensor::<f64>::from_vec(&[1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let mut st = NormState::new(1);
        st.gamma[0] = 2.0;
        st.beta[0] = 0.5;
        let (out, _) = feature_norm(&t, NormMode::Train, &st).unwrap();
        assert!((out.data()[1] - 2.5).abs() < 1e-4);
    }

    #[test]
    fn channel_count_checked() {
        assert!(feature_norm(&Tensor::<f64>::zeros(&[2, 2, 2]), NormMode::Train, &NormState::new(3)).is_err());
    }
}
