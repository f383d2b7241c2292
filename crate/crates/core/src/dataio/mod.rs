//! Samples, dataset loading, annotation variants, cross-validation folds,
//! augmentation and the synthetic defect corpus.

mod annotate;
mod folds;
mod loader;
mod synth;
mod transform;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

pub use annotate::{dilate_mask, make_box_annotation, min_area_rect, AnnotationKind, RotatedRect};
pub use folds::{make_folds, subsample_positives, FoldPlan, FOLD_COUNT};
pub use loader::{
    load_dataset, load_manifest, read_image, read_pair, save_gray, write_manifest, Layout, ManifestRecord,
    MANIFEST_FILE,
};
pub use synth::{synth_generate, synth_sample, SynthConfig, SynthSummary};
pub use transform::{downscale, rotate90, rotate90_augment};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("{image}: no mask file found (expected stem `{expected}`)")]
    MissingMask { image: PathBuf, expected: String },
    #[error("{path}: mask is {mask:?} but image is {image:?}")]
    DimensionMismatch {
        path: PathBuf,
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("{path}:{line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if data.len() != height * width {
            return Err(DataError::Invalid(format!(
                "image data has {} values, expected {height}×{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// `1×H×W` tensor for the networks.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, self.height, self.width], |i| T::of(self.data[i] as f64))
    }

    pub fn to_luma8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Binary defect mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|v| *v)
    }

    /// `true` if every positive pixel of `self` is positive in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Block-max reduction by `factor` (any positive pixel marks the block).
    pub fn reduce_max(&self, factor: usize) -> Result<Mask, DataError> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(DataError::Invalid(format!(
                "mask {}×{} is not divisible by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Mask::empty(h, w);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    out.set(y / factor, x / factor, true);
                }
            }
        }
        Ok(out)
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, self.height, self.width], |i| {
            if self.data[i] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn to_luma8(&self) -> Vec<u8> {
        self.data.iter().map(|v| if *v { 255 } else { 0 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Defective,
    NonDefective,
}

impl Label {
    pub fn is_defective(self) -> bool {
        self == Label::Defective
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub mask: Mask,
    pub label: Label,
    pub product_id: String,
    pub image_id: String,
}

impl Sample {
    /// The label is derived from the mask.
    pub fn new(
        image: Image,
        mask: Mask,
        product_id: impl Into<String>,
        image_id: impl Into<String>,
    ) -> Result<Self, DataError> {
        if (image.height, image.width) != (mask.height, mask.width) {
            return Err(DataError::Invalid(format!(
                "mask is {}×{} but image is {}×{}",
                mask.height, mask.width, image.height, image.width
            )));
        }
        let label = if mask.any() {
            Label::Defective
        } else {
            Label::NonDefective
        };
        Ok(Self {
            image,
            mask,
            label,
            product_id: product_id.into(),
            image_id: image_id.into(),
        })
    }

    pub fn is_defective(&self) -> bool {
        self.label.is_defective()
    }

    /// Same sample with the mask replaced by an annotation variant.
    pub fn with_annotation(&self, kind: AnnotationKind) -> Result<Sample, DataError> {
        let mut s = self.clone();
        s.mask = kind.apply(&self.mask)?;
        Ok(s)
    }
}
