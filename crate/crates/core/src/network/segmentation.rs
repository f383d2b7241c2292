use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{maxpool2, maxpool2_backward, sgd_step, Param, PoolIndices, Real, Tensor};

use super::unit::{ConvUnit, UnitGrad, UnitTrace};
use super::{
    check_input_size, Architecture, LayerSpec, Mode, NetworkError, TensorEntry, TensorEntryMut, SEG_REDUCTION,
};

#[derive(Clone, Debug, PartialEq)]
pub enum SegLayer<T> {
    Conv(ConvUnit<T>),
    Pool,
}

/// Pixel-wise segmentation network producing a 1/8-resolution logit map.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationNet<T> {
    layers: Vec<SegLayer<T>>,
    frozen: bool,
}

#[derive(Clone, Debug)]
pub struct SegOutput<T> {
    /// Activation of the 15×15 convolution after normalization and ReLU.
    pub features: Tensor<T>,
    /// Raw logits of the final 1×1 convolution.
    pub seg_map: Tensor<T>,
}

#[derive(Clone, Debug)]
enum Step<T> {
    Conv(UnitTrace<T>),
    Pool(PoolIndices),
}

/// Intermediate values of a traced forward pass.
#[derive(Clone, Debug)]
pub struct SegTrace<T> {
    steps: Vec<Step<T>>,
}

/// Gradients for every convolution unit, in layer order.
#[derive(Clone, Debug)]
pub struct SegGrads<T> {
    pub units: Vec<UnitGrad<T>>,
}

impl<T: Real> SegmentationNet<T> {
    /// Weights ~ N(0, 0.01²), zero biases, unit gamma, zero beta.
    pub fn build(arch: &Architecture, seed: u64) -> Result<Self, NetworkError> {
        Self::build_with_rng(arch, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn build_with_rng(arch: &Architecture, rng: &mut impl Rng) -> Result<Self, NetworkError> {
        arch.validate()?;
        let layers = arch
            .segmentation_plan()
            .into_iter()
            .map(|spec| match spec {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    normalized,
                } => SegLayer::Conv(ConvUnit::init(rng, in_channels, out_channels, kernel, normalized)),
                LayerSpec::Pool => SegLayer::Pool,
            })
            .collect();
        Ok(Self { layers, frozen: false })
    }

    pub fn layers(&self) -> &[SegLayer<T>] {
        &self.layers
    }

    pub fn units(&self) -> impl Iterator<Item = &ConvUnit<T>> {
        self.layers.iter().filter_map(|l| match l {
            SegLayer::Conv(u) => Some(u),
            SegLayer::Pool => None,
        })
    }

    pub fn units_mut(&mut self) -> impl Iterator<Item = &mut ConvUnit<T>> {
        self.layers.iter_mut().filter_map(|l| match l {
            SegLayer::Conv(u) => Some(u),
            SegLayer::Pool => None,
        })
    }

    pub fn feature_channels(&self) -> usize {
        let n = self.units().count();
        self.units().nth(n.saturating_sub(2)).map_or(0, |u| u.out_channels())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn parameter_count(&self) -> usize {
        self.units().map(ConvUnit::parameter_count).sum()
    }

    fn check_image(image: &Tensor<T>) -> Result<(), NetworkError> {
        let (c, h, w) = image.dims3("seg_forward")?;
        if c != 1 {
            return Err(NetworkError::Architecture(format!(
                "expected a 1-channel image, got {c} channels"
            )));
        }
        check_input_size(h, w, SEG_REDUCTION)
    }

    fn last_conv_index(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, SegLayer::Conv(_)))
            .expect("network has convolutions")
    }

    /// Forward pass without keeping intermediates.
    pub fn forward(&self, image: &Tensor<T>, mode: Mode) -> Result<SegOutput<T>, NetworkError> {
        Self::check_image(image)?;
        let last = self.last_conv_index();
        let mut x = image.clone();
        let mut features = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                SegLayer::Conv(u) => u.infer(&x, mode)?,
                SegLayer::Pool => maxpool2(&x)?.0,
            };
            if i + 1 == last {
                features = Some(x.clone());
            }
        }
        Ok(SegOutput {
            features: features.expect("feature layer precedes the output layer"),
            seg_map: x,
        })
    }

    /// Forward pass that records what [`Self::backward`] needs.
    pub fn forward_traced(&self, image: &Tensor<T>, mode: Mode) -> Result<(SegOutput<T>, SegTrace<T>), NetworkError> {
        Self::check_image(image)?;
        let last = self.last_conv_index();
        let mut x = image.clone();
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut features = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                SegLayer::Conv(u) => {
                    let (y, t) = u.forward(x, mode)?;
                    steps.push(Step::Conv(t));
                    y
                }
                SegLayer::Pool => {
                    let (y, idx) = maxpool2(&x)?;
                    steps.push(Step::Pool(idx));
                    y
                }
            };
            if i + 1 == last {
                features = Some(x.clone());
            }
        }
        Ok((
            SegOutput {
                features: features.expect("feature layer precedes the output layer"),
                seg_map: x,
            },
            SegTrace { steps },
        ))
    }

    /// Backpropagate a gradient on the segmentation map to every parameter.
    pub fn backward(&self, trace: &SegTrace<T>, d_seg_map: Tensor<T>) -> Result<SegGrads<T>, NetworkError> {
        let mut g = d_seg_map;
        let mut units = Vec::new();
        let first_conv = 0;
        for (i, (layer, step)) in self.layers.iter().zip(&trace.steps).enumerate().rev() {
            match (layer, step) {
                (SegLayer::Conv(u), Step::Conv(t)) => {
                    let (ug, d_in) = u.backward(t, g, i != first_conv)?;
                    units.push(ug);
                    g = d_in.unwrap_or_else(|| Tensor::zeros(&[0]));
                }
                (SegLayer::Pool, Step::Pool(idx)) => g = maxpool2_backward(idx, &g)?,
                _ => unreachable!("trace layout matches the network"),
            }
        }
        units.reverse();
        Ok(SegGrads { units })
    }

    /// Fold the batch statistics of a training pass into the running averages.
    pub fn commit_statistics(&mut self, trace: &SegTrace<T>) -> Result<(), NetworkError> {
        if self.frozen {
            return Err(NetworkError::Frozen);
        }
        for (layer, step) in self.layers.iter_mut().zip(&trace.steps) {
            if let (SegLayer::Conv(u), Step::Conv(t)) = (layer, step) {
                u.commit_statistics(t);
            }
        }
        Ok(())
    }

    pub fn apply_sgd(&mut self, grads: &SegGrads<T>, lr: T) -> Result<(), NetworkError> {
        if self.frozen {
            return Err(NetworkError::Frozen);
        }
        let mut params: Vec<Param<'_, T>> = Vec::new();
        for (i, (u, g)) in self.units_mut().zip(&grads.units).enumerate() {
            u.params(g, &format!("seg.conv{}", i + 1), false, &mut params);
        }
        sgd_step(&mut params, lr)?;
        Ok(())
    }

    pub fn entries(&self) -> Vec<TensorEntry<'_, T>> {
        let mut out = Vec::new();
        for (i, u) in self.units().enumerate() {
            u.entries(&format!("seg.conv{}", i + 1), &mut out);
        }
        out
    }

    pub fn entries_mut(&mut self) -> Vec<TensorEntryMut<'_, T>> {
        let mut out = Vec::new();
        for (i, u) in self.units_mut().enumerate() {
            u.entries_mut(&format!("seg.conv{}", i + 1), &mut out);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> SegmentationNet<U> {
        SegmentationNet {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    SegLayer::Conv(u) => SegLayer::Conv(u.cast()),
                    SegLayer::Pool => SegLayer::Pool,
                })
                .collect(),
            frozen: self.frozen,
        }
    }
}
