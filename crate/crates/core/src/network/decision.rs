use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{
    global_pool, global_pool_backward, linear, linear_backward, maxpool2, maxpool2_backward, sgd_step, sigmoid,
    GlobalPool, Param, PoolIndices, Real, Tensor,
};

use super::unit::{ConvUnit, UnitGrad, UnitTrace};
use super::{Architecture, LayerSpec, Mode, NetworkError, TensorEntry, TensorEntryMut, INIT_STD};

/// Image-level classifier on top of the segmentation network.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionNet<T> {
    pub convs: Vec<ConvUnit<T>>,
    /// Weights of the output neuron over `[max of last conv; avg of last conv;
    /// max of seg map; avg of seg map]`.
    pub head_weights: Vec<T>,
    pub head_bias: T,
}

#[derive(Clone, Debug)]
pub struct DecOutput<T> {
    pub logit: T,
    /// `sigmoid(logit)`.
    pub score: T,
    pub last_conv_shape: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DecTrace<T> {
    pools: Vec<PoolIndices>,
    units: Vec<UnitTrace<T>>,
    last_pool: GlobalPool<T>,
    head_input: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct DecGrads<T> {
    pub units: Vec<UnitGrad<T>>,
    pub d_head_weights: Vec<T>,
    pub d_head_bias: T,
}

impl<T: Real> DecisionNet<T> {
    pub fn build(arch: &Architecture, seed: u64) -> Result<Self, NetworkError> {
        Self::build_with_rng(arch, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn build_with_rng(arch: &Architecture, rng: &mut impl Rng) -> Result<Self, NetworkError> {
        arch.validate()?;
        let convs = arch
            .decision_plan()
            .into_iter()
            .filter_map(|spec| match spec {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    normalized,
                } => Some(ConvUnit::init(rng, in_channels, out_channels, kernel, normalized)),
                LayerSpec::Pool => None,
            })
            .collect();
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let head_weights = (0..arch.head_width()).map(|_| T::of(normal.sample(rng))).collect();
        Ok(Self {
            convs,
            head_weights,
            head_bias: T::zero(),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.convs.iter().map(ConvUnit::parameter_count).sum::<usize>() + self.head_weights.len() + 1
    }

    fn input(features: &Tensor<T>, seg_map: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        let (_, fh, fw) = features.dims3("dec_forward")?;
        let (mc, mh, mw) = seg_map.dims3("dec_forward")?;
        if (fh, fw) != (mh, mw) || mc != 1 {
            return Err(NetworkError::SpatialMismatch {
                features: features.shape().to_vec(),
                seg_map: seg_map.shape().to_vec(),
            });
        }
        Ok(Tensor::concat_channels(&[features, seg_map])?)
    }

    fn head_vector(last: &GlobalPool<T>, map: &GlobalPool<T>) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * last.max.len() + 2);
        v.extend_from_slice(&last.max);
        v.extend_from_slice(&last.avg);
        v.push(map.max[0]);
        v.push(map.avg[0]);
        v
    }

    /// Score an image from its segmentation outputs.
    pub fn forward(&self, features: &Tensor<T>, seg_map: &Tensor<T>, mode: Mode) -> Result<DecOutput<T>, NetworkError> {
        let mut x = Self::input(features, seg_map)?;
        for u in &self.convs {
            x = u.infer(&maxpool2(&x)?.0, mode)?;
        }
        let v = Self::head_vector(&global_pool(&x)?, &global_pool(seg_map)?);
        let logit = linear(&v, &self.head_weights, self.head_bias)?;
        Ok(DecOutput {
            logit,
            score: sigmoid(logit),
            last_conv_shape: x.shape().to_vec(),
        })
    }

    pub fn forward_traced(
        &self,
        features: &Tensor<T>,
        seg_map: &Tensor<T>,
        mode: Mode,
    ) -> Result<(DecOutput<T>, DecTrace<T>), NetworkError> {
        let mut x = Self::input(features, seg_map)?;
        let mut pools = Vec::with_capacity(self.convs.len());
        let mut units = Vec::with_capacity(self.convs.len());
        for u in &self.convs {
            let (p, idx) = maxpool2(&x)?;
            pools.push(idx);
            let (y, t) = u.forward(p, mode)?;
            units.push(t);
            x = y;
        }
        let last_pool = global_pool(&x)?;
        let head_input = Self::head_vector(&last_pool, &global_pool(seg_map)?);
        let logit = linear(&head_input, &self.head_weights, self.head_bias)?;
        Ok((
            DecOutput {
                logit,
                score: sigmoid(logit),
                last_conv_shape: x.shape().to_vec(),
            },
            DecTrace {
                pools,
                units,
                last_pool,
                head_input,
            },
        ))
    }

    /// Gradients of every decision parameter given `dL/dlogit`. The
    /// segmentation outputs are treated as constants.
    pub fn backward(&self, trace: &DecTrace<T>, d_logit: T) -> Result<DecGrads<T>, NetworkError> {
        let head = linear_backward(&trace.head_input, &self.head_weights, d_logit)?;
        let d_v = head.d_input.expect("linear_backward returns an input gradient");
        let c = trace.last_pool.max.len();
        let mut g = global_pool_backward(&trace.last_pool, &d_v.data()[..c], &d_v.data()[c..2 * c])?;
        let mut units = Vec::with_capacity(self.convs.len());
        for (i, (u, t)) in self.convs.iter().zip(&trace.units).enumerate().rev() {
            let (ug, d_in) = u.backward(t, g, i > 0)?;
            units.push(ug);
            g = match d_in {
                Some(d) => maxpool2_backward(&trace.pools[i], &d)?,
                None => break,
            };
        }
        units.reverse();
        Ok(DecGrads {
            units,
            d_head_weights: head.d_weights.into_vec(),
            d_head_bias: head.d_bias[0],
        })
    }

    pub fn commit_statistics(&mut self, trace: &DecTrace<T>) {
        for (u, t) in self.convs.iter_mut().zip(&trace.units) {
            u.commit_statistics(t);
        }
    }

    pub fn apply_sgd(&mut self, grads: &DecGrads<T>, lr: T) -> Result<(), NetworkError> {
        let DecisionNet {
            convs,
            head_weights,
            head_bias,
        } = self;
        let d_bias = [grads.d_head_bias];
        let mut bias = [*head_bias];
        {
            let mut params: Vec<Param<'_, T>> = Vec::new();
            for (i, (u, g)) in convs.iter_mut().zip(&grads.units).enumerate() {
                u.params(g, &format!("dec.conv{}", i + 1), false, &mut params);
            }
            params.push(Param {
                name: "dec.head.weight".into(),
                value: head_weights,
                grad: &grads.d_head_weights,
                frozen: false,
            });
            params.push(Param {
                name: "dec.head.bias".into(),
                value: &mut bias,
                grad: &d_bias,
                frozen: false,
            });
            sgd_step(&mut params, lr)?;
        }
        *head_bias = bias[0];
        Ok(())
    }

    pub fn entries(&self) -> Vec<TensorEntry<'_, T>> {
        let mut out = Vec::new();
        for (i, u) in self.convs.iter().enumerate() {
            u.entries(&format!("dec.conv{}", i + 1), &mut out);
        }
        out.push(TensorEntry::new(
            "dec.head.weight".into(),
            &[self.head_weights.len()],
            &self.head_weights,
            true,
        ));
        out.push(TensorEntry::new(
            "dec.head.bias".into(),
            &[1],
            std::slice::from_ref(&self.head_bias),
            true,
        ));
        out
    }

    pub fn entries_mut(&mut self) -> Vec<TensorEntryMut<'_, T>> {
        let mut out = Vec::new();
        let DecisionNet {
            convs,
            head_weights,
            head_bias,
        } = self;
        for (i, u) in convs.iter_mut().enumerate() {
            u.entries_mut(&format!("dec.conv{}", i + 1), &mut out);
        }
        let n = head_weights.len();
        out.push(TensorEntryMut::new("dec.head.weight".into(), vec![n], head_weights));
        out.push(TensorEntryMut::new(
            "dec.head.bias".into(),
            vec![1],
            std::slice::from_mut(head_bias),
        ));
        out
    }

    pub fn cast<U: Real>(&self) -> DecisionNet<U> {
        DecisionNet {
            convs: self.convs.iter().map(ConvUnit::cast).collect(),
            head_weights: self.head_weights.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
            head_bias: U::of(self.head_bias.to_f64_lossy()),
        }
    }
}
