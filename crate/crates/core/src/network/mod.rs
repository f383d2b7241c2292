//! The segmentation network, the decision network stacked on top of it, and
//! everything needed to build, run, account for and persist them.
//!
//! The segmentation network has three resolution blocks of 5×5 convolutions
//! (2, 3 and 4 layers) separated by 2×2 max-pooling, then a 15×15
//! convolution producing the feature volume and a 1×1 convolution producing
//! a single-channel logit map at 1/8 of the input resolution. Every
//! convolution except the last is followed by feature normalization and ReLU.
//!
//! The decision network concatenates the feature volume with the logit map,
//! applies three (max-pool, 5×5 conv) stages and reduces the last activation
//! and the logit map with global max and average pooling into the vector
//! consumed by a single linear output neuron.

mod decision;
mod segmentation;
mod unit;
mod weights;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::{Real, Tensor, TensorError};

pub use crate::tensor::NormMode as Mode;
pub use decision::{DecGrads, DecOutput, DecTrace, DecisionNet};
pub use segmentation::{SegGrads, SegLayer, SegOutput, SegTrace, SegmentationNet};
pub use unit::{ConvUnit, UnitGrad};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, WeightFileError, WEIGHT_FILE_MAGIC, WEIGHT_FILE_VERSION,
};

/// Standard deviation of the zero-mean normal weight initialization.
pub const INIT_STD: f64 = 0.01;
pub const BLOCK_KERNEL: usize = 5;
pub const FEATURE_KERNEL: usize = 15;
pub const DECISION_KERNEL: usize = 5;
/// Convolutions per resolution block of the segmentation network.
pub const BLOCK_DEPTHS: [usize; 3] = [2, 3, 4];
/// Output map resolution relative to the input.
pub const SEG_REDUCTION: usize = 8;
/// Resolution of the last decision convolution relative to the input.
pub const DECISION_REDUCTION: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input {height}×{width} is not divisible by {multiple}")]
    InputSize {
        height: usize,
        width: usize,
        multiple: usize,
    },
    #[error("spatial mismatch: features are {features:?} but segmentation map is {seg_map:?}")]
    SpatialMismatch { features: Vec<usize>, seg_map: Vec<usize> },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("the segmentation network is frozen")]
    Frozen,
}

/// Channel widths of both networks. Kernel sizes, layer counts and pooling
/// positions are fixed; only widths vary between [`Architecture::full`] and
/// reduced desk-scale variants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Output channels of each 5×5 convolution, per resolution block.
    pub blocks: Vec<Vec<usize>>,
    /// Output channels of the 15×15 convolution (the feature volume).
    pub feature_channels: usize,
    /// Output channels of the three decision convolutions.
    pub decision_channels: Vec<usize>,
}

/// One layer of a network as seen by shape and cost accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        normalized: bool,
    },
    Pool,
}

/// Spatial sizes produced by a forward pass at a given input size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ShapeReport {
    pub features: [usize; 3],
    pub seg_map: [usize; 3],
    pub last_decision_conv: [usize; 3],
}

impl Architecture {
    /// The published layout: 32,32 | 64,64,64 | 64,64,64,64 | 1024 | 1, with
    /// 8, 16 and 32 decision channels.
    pub fn full() -> Self {
        Self {
            blocks: vec![vec![32, 32], vec![64; 3], vec![64; 4]],
            feature_channels: 1024,
            decision_channels: vec![8, 16, 32],
        }
    }

    /// Same topology with every segmentation width reduced, for single-core
    /// desk-scale training runs. The decision network is unchanged.
    pub fn compact() -> Self {
        Self {
            blocks: vec![vec![8, 8], vec![16; 3], vec![16; 4]],
            feature_channels: 64,
            decision_channels: vec![8, 16, 32],
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let depths: Vec<usize> = self.blocks.iter().map(Vec::len).collect();
        if depths != BLOCK_DEPTHS {
            return Err(NetworkError::Architecture(format!(
                "block depths must be {BLOCK_DEPTHS:?}, got {depths:?}"
            )));
        }
        if self.decision_channels.len() != 3 {
            return Err(NetworkError::Architecture(
                "decision network needs exactly 3 convolutions".into(),
            ));
        }
        let zero = self
            .blocks
            .iter()
            .flatten()
            .chain(&self.decision_channels)
            .any(|&c| c == 0);
        if zero || self.feature_channels == 0 {
            return Err(NetworkError::Architecture("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Segmentation layers in execution order.
    pub fn segmentation_plan(&self) -> Vec<LayerSpec> {
        let mut plan = Vec::new();
        let mut in_c = 1;
        for block in &self.blocks {
            for &out_c in block {
                plan.push(LayerSpec::Conv {
                    in_channels: in_c,
                    out_channels: out_c,
                    kernel: BLOCK_KERNEL,
                    normalized: true,
                });
                in_c = out_c;
            }
            plan.push(LayerSpec::Pool);
        }
        plan.push(LayerSpec::Conv {
            in_channels: in_c,
            out_channels: self.feature_channels,
            kernel: FEATURE_KERNEL,
            normalized: true,
        });
        plan.push(LayerSpec::Conv {
            in_channels: self.feature_channels,
            out_channels: 1,
            kernel: 1,
            normalized: false,
        });
        plan
    }

    /// Decision layers in execution order (excluding the global pooling and head).
    pub fn decision_plan(&self) -> Vec<LayerSpec> {
        let mut plan = Vec::new();
        let mut in_c = self.feature_channels + 1;
        for &out_c in &self.decision_channels {
            plan.push(LayerSpec::Pool);
            plan.push(LayerSpec::Conv {
                in_channels: in_c,
                out_channels: out_c,
                kernel: DECISION_KERNEL,
                normalized: true,
            });
            in_c = out_c;
        }
        plan
    }

    /// Length of the vector fed to the final linear neuron.
    pub fn head_width(&self) -> usize {
        2 * self.decision_channels[2] + 2
    }

    /// Closed-form learnable parameter count: conv weights and biases, norm
    /// affine parameters and the linear head.
    pub fn parameter_count(&self) -> usize {
        let convs: usize = self
            .segmentation_plan()
            .into_iter()
            .chain(self.decision_plan())
            .map(|l| match l {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    normalized,
                } => {
                    kernel * kernel * in_channels * out_channels
                        + out_channels
                        + if normalized { 2 * out_channels } else { 0 }
                }
                LayerSpec::Pool => 0,
            })
            .sum();
        convs + self.head_width() + 1
    }

    /// Multiply-accumulate count of every convolution for an `h×w` input.
    pub fn conv_macs(&self, height: usize, width: usize) -> u64 {
        let mut total = 0u64;
        let (mut h, mut w) = (height as u64, width as u64);
        let mut count = |plan: Vec<LayerSpec>, h: &mut u64, w: &mut u64| {
            for l in plan {
                match l {
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        ..
                    } => total += (kernel * kernel * in_channels * out_channels) as u64 * *h * *w,
                    LayerSpec::Pool => {
                        *h /= 2;
                        *w /= 2;
                    }
                }
            }
        };
        count(self.segmentation_plan(), &mut h, &mut w);
        count(self.decision_plan(), &mut h, &mut w);
        total
    }

    /// Receptive field of one segmentation-map location, in input pixels.
    pub fn receptive_field(&self) -> usize {
        let geometry: Vec<(usize, usize)> = self
            .segmentation_plan()
            .into_iter()
            .map(|l| match l {
                LayerSpec::Conv { kernel, .. } => (kernel, 1),
                LayerSpec::Pool => (2, 2),
            })
            .collect();
        receptive_field_of(&geometry)
    }

    /// Output shapes for an `h×w` input; both sides must be multiples of 64.
    pub fn shapes(&self, height: usize, width: usize) -> Result<ShapeReport, NetworkError> {
        check_input_size(height, width, DECISION_REDUCTION)?;
        let (h8, w8) = (height / SEG_REDUCTION, width / SEG_REDUCTION);
        Ok(ShapeReport {
            features: [self.feature_channels, h8, w8],
            seg_map: [1, h8, w8],
            last_decision_conv: [
                self.decision_channels[2],
                height / DECISION_REDUCTION,
                width / DECISION_REDUCTION,
            ],
        })
    }
}

/// Receptive field of a chain of `(kernel, stride)` layers via
/// `r ← r + (k − 1)·j`, `j ← j·s`.
pub fn receptive_field_of(layers: &[(usize, usize)]) -> usize {
    let (mut r, mut j) = (1, 1);
    for &(k, s) in layers {
        r += (k - 1) * j;
        j *= s;
    }
    r
}

pub(crate) fn check_input_size(height: usize, width: usize, multiple: usize) -> Result<(), NetworkError> {
    if height == 0 || width == 0 || height % multiple != 0 || width % multiple != 0 {
        return Err(NetworkError::InputSize {
            height,
            width,
            multiple,
        });
    }
    Ok(())
}

/// A named tensor view used for serialization and hashing.
pub struct TensorEntry<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
    /// `false` for running normalization statistics.
    pub learnable: bool,
}

impl<'a, T> TensorEntry<'a, T> {
    pub(crate) fn new(name: String, shape: &[usize], data: &'a [T], learnable: bool) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            data,
            learnable,
        }
    }
}

pub struct TensorEntryMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

impl<'a, T> TensorEntryMut<'a, T> {
    pub(crate) fn new(name: String, shape: Vec<usize>, data: &'a mut [T]) -> Self {
        Self { name, shape, data }
    }
}

/// SHA-256 over names, shapes and little-endian values of `entries`.
pub fn hash_entries<T: Real>(entries: &[TensorEntry<'_, T>]) -> String {
    let mut h = Sha256::new();
    let mut buf = Vec::new();
    for e in entries {
        h.update(e.name.as_bytes());
        for d in &e.shape {
            h.update((*d as u64).to_le_bytes());
        }
        buf.clear();
        e.data.iter().for_each(|v| v.push_le(&mut buf));
        h.update(&buf);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Image-level prediction.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    /// Defect probability in `[0, 1]`.
    pub score: T,
    pub logit: T,
    /// Raw (pre-sigmoid) segmentation logits at 1/8 resolution.
    pub seg_map: Tensor<T>,
}

/// Segmentation and decision networks together.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub arch: Architecture,
    pub seg: SegmentationNet<T>,
    pub dec: DecisionNet<T>,
}

impl<T: Real> Model<T> {
    /// Fresh model; both networks draw from independent streams of `seed`.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self, NetworkError> {
        arch.validate()?;
        let mut seg_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dec_rng = ChaCha8Rng::seed_from_u64(seed);
        dec_rng.set_stream(1);
        Ok(Self {
            arch: arch.clone(),
            seg: SegmentationNet::build_with_rng(arch, &mut seg_rng)?,
            dec: DecisionNet::build_with_rng(arch, &mut dec_rng)?,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.seg.parameter_count() + self.dec.parameter_count()
    }

    /// Inference on a `1×H×W` image with `H`, `W` multiples of 64.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Prediction<T>, NetworkError> {
        let (_, h, w) = image.dims3("predict")?;
        check_input_size(h, w, DECISION_REDUCTION)?;
        let seg = self.seg.forward(image, Mode::Infer)?;
        let out = self.dec.forward(&seg.features, &seg.seg_map, Mode::Infer)?;
        Ok(Prediction {
            score: out.score,
            logit: out.logit,
            seg_map: seg.seg_map,
        })
    }

    pub fn entries(&self) -> Vec<TensorEntry<'_, T>> {
        let mut v = self.seg.entries();
        v.extend(self.dec.entries());
        v
    }

    pub fn entries_mut(&mut self) -> Vec<TensorEntryMut<'_, T>> {
        let mut v = self.seg.entries_mut();
        v.extend(self.dec.entries_mut());
        v
    }

    /// Convert every tensor to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            seg: self.seg.cast(),
            dec: self.dec.cast(),
        }
    }
}
