use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{
    conv2d, conv2d_backward, feature_norm, feature_norm_backward, relu, relu_backward, NormCache, NormMode, NormState,
    Param, Real, Tensor,
};

use super::{NetworkError, TensorEntry, TensorEntryMut, INIT_STD};

/// Convolution optionally followed by feature normalization and ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvUnit<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub norm: Option<NormState<T>>,
    pub relu: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct UnitTrace<T> {
    input: Tensor<T>,
    norm: Option<NormCache<T>>,
    output: Tensor<T>,
}

/// Parameter gradients of one [`ConvUnit`]; `d_gamma`/`d_beta` are empty
/// when the unit has no normalization.
#[derive(Clone, Debug)]
pub struct UnitGrad<T> {
    pub d_weights: Tensor<T>,
    pub d_bias: Vec<T>,
    pub d_gamma: Vec<T>,
    pub d_beta: Vec<T>,
}

impl<T: Real> ConvUnit<T> {
    pub fn init(rng: &mut impl Rng, in_channels: usize, out_channels: usize, kernel: usize, normalized: bool) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let weights = Tensor::from_fn(&[out_channels, in_channels, kernel, kernel], |_| {
            T::of(normal.sample(rng))
        });
        Self {
            weights,
            bias: vec![T::zero(); out_channels],
            norm: normalized.then(|| NormState::new(out_channels)),
            relu: normalized,
        }
    }

    pub fn cast<U: Real>(&self) -> ConvUnit<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.to_f64_lossy())).collect::<Vec<U>>();
        ConvUnit {
            weights: self.weights.cast(),
            bias: conv(&self.bias),
            norm: self.norm.as_ref().map(|n| NormState {
                gamma: conv(&n.gamma),
                beta: conv(&n.beta),
                running_mean: conv(&n.running_mean),
                running_var: conv(&n.running_var),
            }),
            relu: self.relu,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.norm.as_ref().map_or(0, |n| 2 * n.channels())
    }

    pub fn infer(&self, input: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>, NetworkError> {
        let mut x = conv2d(input, &self.weights, &self.bias)?;
        if let Some(norm) = &self.norm {
            x = feature_norm(&x, mode, norm)?.0;
        }
        if self.relu {
            x = relu(&x);
        }
        Ok(x)
    }

    pub(crate) fn forward(&self, input: Tensor<T>, mode: NormMode) -> Result<(Tensor<T>, UnitTrace<T>), NetworkError> {
        let mut x = conv2d(&input, &self.weights, &self.bias)?;
        let mut cache = None;
        if let Some(norm) = &self.norm {
            let (y, c) = feature_norm(&x, mode, norm)?;
            x = y;
            cache = Some(c);
        }
        if self.relu {
            x = relu(&x);
        }
        let trace = UnitTrace {
            input,
            norm: cache,
            output: x.clone(),
        };
        Ok((x, trace))
    }

    pub(crate) fn backward(
        &self,
        trace: &UnitTrace<T>,
        upstream: Tensor<T>,
        need_input_grad: bool,
    ) -> Result<(UnitGrad<T>, Option<Tensor<T>>), NetworkError> {
        let mut g = upstream;
        if self.relu {
            g = relu_backward(&trace.output, &g)?;
        }
        let (mut d_gamma, mut d_beta) = (Vec::new(), Vec::new());
        if let (Some(norm), Some(cache)) = (&self.norm, &trace.norm) {
            let ng = feature_norm_backward(cache, norm, &g)?;
            d_gamma = ng.d_gamma;
            d_beta = ng.d_beta;
            g = ng.d_input;
        }
        let cg = conv2d_backward(&trace.input, &self.weights, &g, need_input_grad)?;
        Ok((
            UnitGrad {
                d_weights: cg.d_weights,
                d_bias: cg.d_bias,
                d_gamma,
                d_beta,
            },
            cg.d_input,
        ))
    }

    pub(crate) fn commit_statistics(&mut self, trace: &UnitTrace<T>) {
        if let (Some(norm), Some(cache)) = (self.norm.as_mut(), trace.norm.as_ref()) {
            if cache.mode == NormMode::Train {
                norm.update_running(cache);
            }
        }
    }

    pub(crate) fn params<'a>(
        &'a mut self,
        grad: &'a UnitGrad<T>,
        prefix: &str,
        frozen: bool,
        out: &mut Vec<Param<'a, T>>,
    ) {
        let ConvUnit {
            weights, bias, norm, ..
        } = self;
        out.push(Param {
            name: format!("{prefix}.weight"),
            value: weights.data_mut(),
            grad: grad.d_weights.data(),
            frozen,
        });
        out.push(Param {
            name: format!("{prefix}.bias"),
            value: bias,
            grad: &grad.d_bias,
            frozen,
        });
        if let Some(n) = norm {
            out.push(Param {
                name: format!("{prefix}.norm.gamma"),
                value: &mut n.gamma,
                grad: &grad.d_gamma,
                frozen,
            });
            out.push(Param {
                name: format!("{prefix}.norm.beta"),
                value: &mut n.beta,
                grad: &grad.d_beta,
                frozen,
            });
        }
    }

    pub(crate) fn entries<'a>(&'a self, prefix: &str, out: &mut Vec<TensorEntry<'a, T>>) {
        out.push(TensorEntry::new(
            format!("{prefix}.weight"),
            self.weights.shape(),
            self.weights.data(),
            true,
        ));
        out.push(TensorEntry::new(
            format!("{prefix}.bias"),
            &[self.bias.len()],
            &self.bias,
            true,
        ));
        if let Some(n) = &self.norm {
            let c = [n.channels()];
            out.push(TensorEntry::new(format!("{prefix}.norm.gamma"), &c, &n.gamma, true));
            out.push(TensorEntry::new(format!("{prefix}.norm.beta"), &c, &n.beta, true));
            out.push(TensorEntry::new(
                format!("{prefix}.norm.running_mean"),
                &c,
                &n.running_mean,
                false,
            ));
            out.push(TensorEntry::new(
                format!("{prefix}.norm.running_var"),
                &c,
                &n.running_var,
                false,
            ));
        }
    }

    pub(crate) fn entries_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorEntryMut<'a, T>>) {
        let ConvUnit {
            weights, bias, norm, ..
        } = self;
        let shape = weights.shape().to_vec();
        out.push(TensorEntryMut::new(
            format!("{prefix}.weight"),
            shape,
            weights.data_mut(),
        ));
        out.push(TensorEntryMut::new(format!("{prefix}.bias"), vec![bias.len()], bias));
        if let Some(n) = norm {
            let c = vec![n.gamma.len()];
            let NormState {
                gamma,
                beta,
                running_mean,
                running_var,
            } = n;
            out.push(TensorEntryMut::new(format!("{prefix}.norm.gamma"), c.clone(), gamma));
            out.push(TensorEntryMut::new(format!("{prefix}.norm.beta"), c.clone(), beta));
            out.push(TensorEntryMut::new(
                format!("{prefix}.norm.running_mean"),
                c.clone(),
                running_mean,
            ));
            out.push(TensorEntryMut::new(
                format!("{prefix}.norm.running_var"),
                c,
                running_var,
            ));
        }
    }
}
